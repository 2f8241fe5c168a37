"""Bias-sweep evaluation: best seen/unseen accuracy, harmonic mean, AUC,
and top-1 composition/attribute/object accuracy.

A scalar bias swept from -inf to +inf is added to every unseen-composition
logit, trading seen accuracy against unseen accuracy. The sweep is
evaluated only at its breakpoints: per-sample margins between the best
seen and best unseen logit, nudged by +/-delta so both sides of every
tie are sampled, plus the two infinite sentinels (argmax restricted to
one partition). Ties in any argmax resolve to the lowest composition
index, matching the engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import LabelSpace

BREAK_DELTA = 1e-6

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2.0


@dataclass
class ScoreTable:
    logits: np.ndarray      # (N, num_test)
    gt: np.ndarray          # (N,) ground-truth test-composition index
    seen_mask: np.ndarray   # (num_test,) bool

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.gt = np.asarray(self.gt, dtype=np.int64)
        self.seen_mask = np.asarray(self.seen_mask, dtype=bool)
        n, c = self.logits.shape
        if self.gt.shape != (n,) or self.seen_mask.shape != (c,):
            raise ValueError("inconsistent score table shapes")
        if n and (self.gt.min() < 0 or self.gt.max() >= c):
            raise ValueError("ground truth index out of range")


@dataclass
class SweepCurve:
    points: list[tuple[float, float, float]]  # (bias, seen_acc, unseen_acc)
    seen_samples: int
    unseen_samples: int


def bias_candidates(table: ScoreTable) -> list[float]:
    """All bias values the accuracy staircase can change at, bracketed."""
    seen = table.seen_mask
    unseen = ~seen
    cands: set[float] = {-np.inf, np.inf}
    if seen.any() and unseen.any() and len(table.gt):
        margins = (table.logits[:, seen].max(axis=1)
                   - table.logits[:, unseen].max(axis=1))
        for m in np.unique(margins):
            cands.add(float(m) - BREAK_DELTA)
            cands.add(float(m) + BREAK_DELTA)
    return sorted(cands)


def _masked_argmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise argmax restricted to mask; lowest index wins ties."""
    shielded = np.where(mask[None, :], logits, -np.inf)
    return np.argmax(shielded, axis=1)


def accuracy_at_bias(table: ScoreTable, bias: float) -> tuple[float, float]:
    """(seen_acc, unseen_acc) with bias added to unseen logits.

    Infinite bias restricts the prediction support to one partition. An
    empty partition reports accuracy 0 (flagged on the SweepCurve).
    """
    seen = table.seen_mask
    unseen = ~seen
    if bias == np.inf:
        pred = _masked_argmax(table.logits, unseen) if unseen.any() else \
            _masked_argmax(table.logits, seen)
    elif bias == -np.inf:
        pred = _masked_argmax(table.logits, seen) if seen.any() else \
            _masked_argmax(table.logits, unseen)
    else:
        biased = table.logits + bias * unseen[None, :].astype(np.float64)
        pred = np.argmax(biased, axis=1)
    correct = pred == table.gt
    gt_seen = seen[table.gt]
    n_seen = int(gt_seen.sum())
    n_unseen = int((~gt_seen).sum())
    seen_acc = float(correct[gt_seen].mean()) if n_seen else 0.0
    unseen_acc = float(correct[~gt_seen].mean()) if n_unseen else 0.0
    return seen_acc, unseen_acc


def sweep(table: ScoreTable) -> SweepCurve:
    gt_seen = table.seen_mask[table.gt]
    pts = []
    for b in bias_candidates(table):
        s, u = accuracy_at_bias(table, b)
        pts.append((b, s, u))
    return SweepCurve(points=pts, seen_samples=int(gt_seen.sum()),
                      unseen_samples=int((~gt_seen).sum()))


def auc_hm(curve: SweepCurve) -> tuple[float, float, float, float]:
    """(auc, best_hm, best_seen, best_unseen).

    AUC is the trapezoidal area of the deduplicated (seen, unseen)
    staircase, closed to both axes: the sweep's infinite ends already
    pin (0, best_unseen) and (best_seen, 0) when derived from a table.
    """
    pts = sorted({(s, u) for _, s, u in curve.points})
    if not pts:
        return 0.0, 0.0, 0.0, 0.0
    best_seen = max(s for s, _ in pts)
    best_unseen = max(u for _, u in pts)
    best_hm = 0.0
    for s, u in pts:
        if s + u > 0:
            best_hm = max(best_hm, 2.0 * s * u / (s + u))
    # Upper envelope over the seen axis, then close to the axes.
    env: list[tuple[float, float]] = []
    for s, u in pts:  # ascending s; keep the max u per s
        if env and env[-1][0] == s:
            env[-1] = (s, max(env[-1][1], u))
        else:
            env.append((s, u))
    env = [(0.0, env[0][1])] + env if env[0][0] > 0 else env
    env = env + [(env[-1][0], 0.0)] if env[-1][1] > 0 else env
    xs = np.array([s for s, _ in env])
    ys = np.array([u for _, u in env])
    auc = float(_trapezoid(ys, xs))
    return auc, best_hm, best_seen, best_unseen


def top1_report(table: ScoreTable, space: LabelSpace) -> tuple[float, float, float]:
    """Unbiased top-1 accuracy for compositions, attributes, objects.

    Attribute/object correctness is judged from the components of the
    predicted composition.
    """
    if len(table.gt) == 0:
        return 0.0, 0.0, 0.0
    pairs = np.asarray(space.test_pairs, dtype=np.int64)
    pred = np.argmax(table.logits, axis=1)
    comp = float((pred == table.gt).mean())
    attr = float((pairs[pred, 0] == pairs[table.gt, 0]).mean())
    obj = float((pairs[pred, 1] == pairs[table.gt, 1]).mean())
    return comp, attr, obj


def cumulative_top1(table: ScoreTable, partition: str = "all") -> np.ndarray:
    """Prefix top-1 accuracy series for trend plots.

    partition: "all", "seen", or "unseen" restricts which samples are
    counted (by ground truth); the prefix still advances over the full
    stream so curves from different partitions share an x axis.
    """
    pred = np.argmax(table.logits, axis=1)
    correct = (pred == table.gt).astype(np.float64)
    gt_seen = table.seen_mask[table.gt]
    if partition == "seen":
        weight = gt_seen.astype(np.float64)
    elif partition == "unseen":
        weight = (~gt_seen).astype(np.float64)
    elif partition == "all":
        weight = np.ones_like(correct)
    else:
        raise ValueError(f"bad partition {partition!r}")
    hits = np.cumsum(correct * weight)
    total = np.cumsum(weight)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, hits / total, 0.0)
    return out


def summarize(table: ScoreTable, space: LabelSpace) -> dict:
    """Full metric bundle: bias sweep plus unbiased top-1 triple."""
    curve = sweep(table)
    auc, hm, best_seen, best_unseen = auc_hm(curve)
    comp, attr, obj = top1_report(table, space)
    return {
        "auc": auc,
        "hm": hm,
        "seen": best_seen,
        "unseen": best_unseen,
        "top1_comp": comp,
        "top1_attr": attr,
        "top1_obj": obj,
        "samples": int(len(table.gt)),
        "seen_samples": curve.seen_samples,
        "unseen_samples": curve.unseen_samples,
    }
