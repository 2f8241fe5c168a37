"""Run artifacts: JSON-lines per-sample reports, logit-table containers
for re-evaluation, sweep-curve CSVs, summary JSON, and run manifests.

Everything except wall-clock timing is a deterministic function of the
manifest; comparisons for reproducibility strip the timing fields.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .container import DataError, read_container, write_container
from .data_model import LabelSpace
from .engine import SampleOutcome
from .metrics import ScoreTable, SweepCurve

TIMING_KEYS = ("latency_us", "update_us", "mean_latency_us", "mean_update_us")


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_report(path: str | Path, outcomes: list[SampleOutcome],
                 extra_summary: dict | None = None) -> None:
    """One record per sample plus a final summary record."""
    lines = []
    for i, out in enumerate(outcomes):
        probs = out.prediction.probs
        k = min(5, probs.shape[0])
        top5 = np.argsort(-probs, kind="stable")[:k]
        rec = {
            "i": i,
            "pred": out.prediction.pseudo_label,
            "top5": [int(t) for t in top5],
            "entropy": out.prediction.entropy_fused,
            "admitted": out.admitted,
            "pseudo_label": out.pseudo_label,
            "l_pe": out.l_pe,
            "l_mcrl": out.l_mcrl,
            "loss": out.loss,
            "latency_us": out.latency_s * 1e6,
            "update_us": out.update_s * 1e6,
        }
        if out.incident:
            rec["incident"] = out.incident
        lines.append(_json_line(rec))
    n = len(outcomes)
    summary = {
        "summary": True,
        "samples": n,
        "admitted": sum(1 for o in outcomes if o.admitted),
        "incidents": sum(1 for o in outcomes if o.incident),
        "mean_latency_us": (sum(o.latency_s for o in outcomes) / n * 1e6) if n else 0.0,
        "mean_update_us": (sum(o.update_s for o in outcomes) / n * 1e6) if n else 0.0,
    }
    if extra_summary:
        summary.update(extra_summary)
    lines.append(_json_line(summary))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def strip_timing(report_text: str) -> str:
    """Canonical form of a report for byte comparison: timing removed."""
    out = []
    for line in report_text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        for key in TIMING_KEYS:
            rec.pop(key, None)
        out.append(_json_line(rec))
    return "\n".join(out) + "\n"


def save_score_table(path: str | Path, table: ScoreTable, space: LabelSpace) -> None:
    """Persist per-sample logits (f64: metric recomputation must be
    bit-exact) plus the label space needed to interpret them."""
    meta = {
        "count": int(len(table.gt)),
        "gt": [int(g) for g in table.gt],
        "attributes": space.attributes,
        "objects": space.objects,
        "seen_pairs": [[int(a), int(o)] for a, o in space.seen_pairs],
        "unseen_pairs": [[int(a), int(o)] for a, o in space.unseen_pairs],
        "test_pairs": [[int(a), int(o)] for a, o in space.test_pairs],
    }
    write_container(path, "scores", meta, [("logits", table.logits, "f8")])


def load_score_table(path: str | Path) -> tuple[ScoreTable, LabelSpace]:
    header, mats = read_container(path, expect_kind="scores", allow_inf=True)
    try:
        space = LabelSpace(
            attributes=list(header["attributes"]),
            objects=list(header["objects"]),
            seen_pairs=[(int(a), int(o)) for a, o in header["seen_pairs"]],
            unseen_pairs=[(int(a), int(o)) for a, o in header["unseen_pairs"]],
            test_pairs=[(int(a), int(o)) for a, o in header["test_pairs"]],
        )
        gt = np.array([int(g) for g in header["gt"]], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("bad_header", f"{path}: {exc}") from exc
    logits = mats.get("logits")
    if logits is None or logits.shape[0] != len(gt):
        raise DataError("row_count_mismatch", f"{path}: logit rows vs gt length")
    return ScoreTable(logits=logits, gt=gt, seen_mask=space.seen_mask()), space


def write_curve_csv(path: str | Path, curve: SweepCurve) -> None:
    rows = ["bias,seen_acc,unseen_acc"]
    rows += [f"{b!r},{s!r},{u!r}" for b, s, u in curve.points]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_trend_csv(path: str | Path, table: ScoreTable) -> None:
    """Prefix top-1 accuracy series (overall/seen/unseen) for trend plots."""
    from .metrics import cumulative_top1
    series = {p: cumulative_top1(table, p) for p in ("all", "seen", "unseen")}
    rows = ["samples,top1_all,top1_seen,top1_unseen"]
    for i in range(len(table.gt)):
        rows.append(f"{i + 1},{series['all'][i]!r},{series['seen'][i]!r},"
                    f"{series['unseen'][i]!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_summary_json(path: str | Path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def build_manifest(command: str, config: dict, inputs: dict[str, str],
                   outputs: dict[str, str], seed=None, shuffle_seed=None) -> dict:
    return {
        "command": command,
        "engine_version": __version__,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": file_sha256(p)}
                   for name, p in inputs.items()},
        "outputs": {name: str(p) for name, p in outputs.items()},
        "seed": seed,
        "shuffle_seed": shuffle_seed,
        "wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def manifest_determinism_key(manifest: dict) -> dict:
    """The manifest fields that must coincide for two runs to be
    bitwise-comparable: everything except wall clock and file locations."""
    key = {k: v for k, v in manifest.items()
           if k not in ("wall_clock_utc", "outputs")}
    key["inputs"] = {name: rec["sha256"] for name, rec in manifest["inputs"].items()}
    return key


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")
