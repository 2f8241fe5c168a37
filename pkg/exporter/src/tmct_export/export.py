"""Export jobs: prototype banks and test streams in the engine's binary
formats, plus a manifest recording model, preprocessing, and split hashes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SplitSpec, load_split
from .writer import write_bank, write_stream


@dataclass
class ExportJob:
    dataset_root: str
    bank_out: str
    stream_out: str
    model_id: str | None = None
    backend: str = "stub"
    checkpoint: str | None = None   # fine-tuned weights; overrides backend
    open_world: bool = False
    manifest_out: str | None = None


def _split_hashes(root: Path) -> dict[str, str]:
    out = {}
    for name in ("train_pairs.txt", "val_pairs.txt", "test_pairs.txt"):
        path = root / "compositional-split-natural" / name
        out[name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def bank_pairs(split: SplitSpec, open_world: bool) -> list[tuple[str, str]]:
    """Row order of the exported bank: test pairs as listed (closed world)
    or the full attribute/object product (open world)."""
    if not open_world:
        return list(split.test_pairs)
    return [(a, o) for a, o in itertools.product(split.attributes, split.objects)]


def export_prototypes(job: ExportJob, encoder, split: SplitSpec | None = None) -> int:
    """Write the bank file; returns the number of prototype rows."""
    split = split or load_split(job.dataset_root)
    pairs = bank_pairs(split, job.open_world)
    unknown = [p for p in pairs
               if p[0] not in set(split.attributes) or p[1] not in set(split.objects)]
    if unknown:
        raise ValueError(f"compositions outside the vocabulary: {unknown[:3]}")
    proto = encoder.encode_texts(pairs)
    write_bank(job.bank_out,
               attributes=split.attributes, objects=split.objects,
               seen_pairs=split.pair_indices(split.seen_test_pairs),
               unseen_pairs=split.pair_indices(split.unseen_test_pairs),
               test_pairs=split.pair_indices(pairs),
               proto=proto, temperature=encoder.temperature)
    return len(pairs)


def export_stream(job: ExportJob, encoder,
                  split: SplitSpec | None = None) -> tuple[int, list[str]]:
    """Write the stream file in split order; unreadable images are skipped
    and reported. Returns (exported count, skipped paths)."""
    split = split or load_split(job.dataset_root)
    root = Path(job.dataset_root)
    a_idx = {a: i for i, a in enumerate(split.attributes)}
    o_idx = {o: i for i, o in enumerate(split.objects)}
    feats = []
    labels = []
    skipped = []
    for rel, attr, obj in split.test_images:
        try:
            feats.append(encoder.encode_image(root / rel))
        except (OSError, ValueError):
            skipped.append(rel)
            continue
        labels.append((a_idx[attr], o_idx[obj]))
    features = (np.stack(feats) if feats
                else np.zeros((0, encoder.dim)))
    write_stream(job.stream_out, features, labels,
                 num_attributes=len(split.attributes),
                 num_objects=len(split.objects))
    return len(labels), skipped


def run_export(job: ExportJob, encoder) -> dict:
    split = load_split(job.dataset_root)
    rows = export_prototypes(job, encoder, split)
    count, skipped = export_stream(job, encoder, split)
    manifest = {
        "model_id": encoder.model_id,
        "backend": type(encoder).__name__,
        "temperature": encoder.temperature,
        "dim": encoder.dim,
        "preprocessing": "RGB 16x16 bilinear, [0,1]"
        if type(encoder).__name__ != "ClipEncoder" else "CLIP processor defaults",
        "open_world": job.open_world,
        "prototype_rows": rows,
        "stream_count": count,
        "skipped_images": skipped,
        "split_hashes": _split_hashes(Path(job.dataset_root)),
        "outputs": {"bank": str(job.bank_out), "stream": str(job.stream_out)},
    }
    manifest_path = job.manifest_out or str(Path(job.bank_out).with_suffix(".export-manifest.json"))
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return manifest
