"""Label spaces, prototype banks, sample streams, run configuration, and
their on-disk formats (`.tmct-bank`, `.tmct-stream`, feasibility files).

Ground-truth labels travel inside stream files but are quarantined: the
adaptation engine receives bare feature vectors, labels are consumed only
by the metrics layer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .container import DataError, read_container, write_container
from .numerics import normalize_rows

Pair = tuple[int, int]


@dataclass(frozen=True)
class LabelSpace:
    """Attribute/object vocabularies and the seen/unseen/test pair sets.

    test_pairs is ordered and defines the row order of every structure
    indexed by test composition.
    """

    attributes: list[str]
    objects: list[str]
    seen_pairs: list[Pair]
    unseen_pairs: list[Pair]
    test_pairs: list[Pair]

    def __post_init__(self):
        n_a, n_o = len(self.attributes), len(self.objects)
        if n_a == 0 or n_o == 0:
            raise DataError("bad_header", "empty attribute or object vocabulary")
        for name, pairs in (("seen", self.seen_pairs), ("unseen", self.unseen_pairs),
                            ("test", self.test_pairs)):
            seen_once = set()
            for a, o in pairs:
                if not (0 <= a < n_a and 0 <= o < n_o):
                    raise DataError("index_range", f"{name} pair ({a},{o}) out of range")
                if (a, o) in seen_once:
                    raise DataError("duplicate_pair", f"{name} pair ({a},{o}) repeated")
                seen_once.add((a, o))
        seen = set(self.seen_pairs)
        unseen = set(self.unseen_pairs)
        if seen & unseen:
            raise DataError("duplicate_pair", "seen and unseen pair sets overlap")
        test = set(self.test_pairs)
        closed = test == seen | unseen
        open_ = len(self.test_pairs) == n_a * n_o
        if not (closed or open_):
            raise DataError("bad_header",
                            "test pairs are neither seen+unseen nor the full product")

    @property
    def num_test(self) -> int:
        return len(self.test_pairs)

    def test_index(self) -> dict[Pair, int]:
        return {p: i for i, p in enumerate(self.test_pairs)}

    def seen_mask(self) -> np.ndarray:
        """Boolean mask over test_pairs marking seen compositions."""
        seen = set(self.seen_pairs)
        return np.array([p in seen for p in self.test_pairs], dtype=bool)


@dataclass
class PrototypeBank:
    """Unit-norm textual prototypes over the test compositions plus the
    pre-trained softmax temperature."""

    proto: np.ndarray  # (num_test, d), rows unit-norm
    temperature: float

    @property
    def dim(self) -> int:
        return int(self.proto.shape[1])


@dataclass(frozen=True)
class StreamSample:
    feature: np.ndarray  # (d,), unit-norm
    attr_idx: int
    obj_idx: int


@dataclass(frozen=True)
class FeasibilityScores:
    score: np.ndarray  # (num_test,), seen rows forced to +inf


DISABLE_CHOICES = ("queue", "tkam", "vkam", "auw", "mcrl")


@dataclass
class EngineConfig:
    """Test-phase knobs. Defaults mirror the fine-grained-shoes benchmark
    column of the published configuration table."""

    K: int = 3
    alpha: float = 0.0
    beta: float = 10.0
    theta: float = 1.0
    lam: float = 3.5          # weight of the prototype-alignment loss ("lambda")
    lr: float = 5e-6
    adamw_eps: float = 1e-3
    adamw_weight_decay: float = 1e-3
    adamw_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    open_world: bool = False
    feasibility_path: str | None = None
    feasibility_threshold: float = 0.0
    visual_weight_source: str = "per_modality"   # or "textual"
    admission_prototypes: str = "refined"        # or "base"
    fused_use_tau: bool = False                  # divide fused logits by tau
    disable: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.alpha < 0 or self.beta <= 0 or self.theta <= 0 or self.lam < 0:
            raise ValueError("alpha >= 0, beta > 0, theta > 0, lambda >= 0 required")
        # lr == 0 is the frozen-baseline reduction and is explicitly allowed.
        if self.lr < 0 or self.adamw_eps <= 0 or self.adamw_weight_decay < 0:
            raise ValueError("lr >= 0, eps > 0, weight decay >= 0 required")
        b1, b2 = self.adamw_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError("adamw betas must lie in [0, 1)")
        if self.visual_weight_source not in ("per_modality", "textual"):
            raise ValueError(f"bad visual_weight_source {self.visual_weight_source!r}")
        if self.admission_prototypes not in ("refined", "base"):
            raise ValueError(f"bad admission_prototypes {self.admission_prototypes!r}")
        unknown = set(self.disable) - set(DISABLE_CHOICES)
        if unknown:
            raise ValueError(f"unknown disable switches {sorted(unknown)}")
        object.__setattr__(self, "disable", frozenset(self.disable))

    def disabled(self, name: str) -> bool:
        return name in self.disable

    def with_disabled(self, *names: str) -> "EngineConfig":
        return replace(self, disable=self.disable | set(names))


# ---------------------------------------------------------------------------
# file formats


def _pairs_payload(pairs: list[Pair]) -> list[list[int]]:
    return [[int(a), int(o)] for a, o in pairs]


def _pairs_from_payload(raw) -> list[Pair]:
    try:
        return [(int(a), int(o)) for a, o in raw]
    except (TypeError, ValueError) as exc:
        raise DataError("bad_header", f"malformed pair list: {exc}") from exc


def save_prototype_bank(path: str | Path, space: LabelSpace, bank: PrototypeBank) -> None:
    if bank.proto.shape[0] != space.num_test:
        raise DataError("row_count_mismatch",
                        f"{bank.proto.shape[0]} prototype rows for "
                        f"{space.num_test} test pairs")
    meta = {
        "attributes": space.attributes,
        "objects": space.objects,
        "seen_pairs": _pairs_payload(space.seen_pairs),
        "unseen_pairs": _pairs_payload(space.unseen_pairs),
        "test_pairs": _pairs_payload(space.test_pairs),
        "temperature": float(bank.temperature),
    }
    write_container(path, "bank", meta, [("proto", bank.proto, "f4")])


def load_prototype_bank(path: str | Path) -> tuple[LabelSpace, PrototypeBank]:
    """Load and validate a bank file; prototype rows are re-normalized."""
    header, mats = read_container(path, expect_kind="bank")
    try:
        space = LabelSpace(
            attributes=list(header["attributes"]),
            objects=list(header["objects"]),
            seen_pairs=_pairs_from_payload(header["seen_pairs"]),
            unseen_pairs=_pairs_from_payload(header["unseen_pairs"]),
            test_pairs=_pairs_from_payload(header["test_pairs"]),
        )
        tau = float(header["temperature"])
    except KeyError as exc:
        raise DataError("bad_header", f"{path}: missing field {exc}") from exc
    if tau <= 0 or not np.isfinite(tau):
        raise DataError("bad_header", f"{path}: temperature must be positive")
    if "proto" not in mats:
        raise DataError("bad_header", f"{path}: no proto matrix")
    proto = mats["proto"]
    if proto.shape[0] != space.num_test:
        raise DataError("row_count_mismatch",
                        f"{path}: {proto.shape[0]} rows vs {space.num_test} test pairs")
    unit, _, valid = normalize_rows(proto)
    if not np.all(valid):
        bad = int(np.flatnonzero(~valid)[0])
        raise DataError("degenerate_prototype", f"{path}: prototype row {bad} has zero norm")
    return space, PrototypeBank(proto=unit, temperature=tau)


def save_stream(path: str | Path, samples: list[StreamSample],
                num_attributes: int, num_objects: int) -> None:
    dim = int(samples[0].feature.shape[0]) if samples else 0
    feats = (np.stack([s.feature for s in samples])
             if samples else np.zeros((0, max(dim, 1))))
    meta = {
        "count": len(samples),
        "num_attributes": int(num_attributes),
        "num_objects": int(num_objects),
        "labels": [[int(s.attr_idx), int(s.obj_idx)] for s in samples],
    }
    write_container(path, "stream", meta, [("features", feats, "f4")])


def load_stream(path: str | Path, expected_dim: int | None = None) -> Iterator[StreamSample]:
    """Yield samples in file order, features normalized on yield."""
    header, mats = read_container(path, expect_kind="stream")
    try:
        count = int(header["count"])
        n_a = int(header["num_attributes"])
        n_o = int(header["num_objects"])
        labels = header["labels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("bad_header", f"{path}: {exc}") from exc
    feats = mats.get("features")
    if feats is None or feats.shape[0] != count or len(labels) != count:
        raise DataError("row_count_mismatch", f"{path}: header/payload counts disagree")
    if expected_dim is not None and count > 0 and feats.shape[1] != expected_dim:
        raise DataError("dim_mismatch",
                        f"{path}: feature dim {feats.shape[1]}, expected {expected_dim}")
    unit, _, valid = normalize_rows(feats)
    for i in range(count):
        a, o = labels[i]
        a, o = int(a), int(o)
        if not (0 <= a < n_a and 0 <= o < n_o):
            raise DataError("index_range", f"{path}: sample {i} label ({a},{o}) out of range")
        if not valid[i]:
            raise DataError("degenerate_prototype", f"{path}: sample {i} feature has zero norm")
        yield StreamSample(feature=unit[i], attr_idx=a, obj_idx=o)


def shuffle_stream(samples: list[StreamSample], seed: int) -> list[StreamSample]:
    """Deterministic permutation of the sample order for a given seed."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


def save_feasibility(path: str | Path, scores: np.ndarray) -> None:
    write_container(path, "feasibility", {"count": int(scores.shape[0])},
                    [("score", np.asarray(scores, dtype=np.float64)[None, :], "f4")])


def load_feasibility(path: str | Path, space: LabelSpace) -> FeasibilityScores:
    """Load per-composition feasibility scores; seen rows are forced to
    +inf so they can never be filtered."""
    header, mats = read_container(path, expect_kind="feasibility", allow_inf=True)
    score = mats.get("score")
    if score is None or score.shape != (1, space.num_test):
        got = None if score is None else score.shape
        raise DataError("row_count_mismatch",
                        f"{path}: score shape {got}, expected (1, {space.num_test})")
    score = score[0].copy()
    score[space.seen_mask()] = np.inf
    return FeasibilityScores(score=score)
