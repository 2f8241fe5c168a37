"""CZSL dataset access: compositional split files plus an image index.

Expected layout under the dataset root:

    compositional-split-natural/
        train_pairs.txt     one "attribute object" pair per line
        val_pairs.txt
        test_pairs.txt
    metadata.csv            image,attribute,object,split  (split: train/val/test)
    images/...              image files, paths relative to the root

The common torch-serialized metadata file
(metadata_compositional-split-natural.t7) is accepted as a fallback when
torch is importable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

Pair = tuple[str, str]


@dataclass
class SplitSpec:
    """Vocabularies, pair splits, and the per-image test index."""

    attributes: list[str]               # sorted vocabulary
    objects: list[str]
    train_pairs: list[Pair]             # by name, file order
    val_pairs: list[Pair]
    test_pairs: list[Pair]
    test_images: list[tuple[str, str, str]]  # (relative path, attr, obj), file order
    train_images: list[tuple[str, str, str]]

    @property
    def seen_test_pairs(self) -> list[Pair]:
        train = set(self.train_pairs)
        return [p for p in self.test_pairs if p in train]

    @property
    def unseen_test_pairs(self) -> list[Pair]:
        train = set(self.train_pairs)
        return [p for p in self.test_pairs if p not in train]

    def pair_indices(self, pairs: list[Pair]) -> list[tuple[int, int]]:
        a_idx = {a: i for i, a in enumerate(self.attributes)}
        o_idx = {o: i for i, o in enumerate(self.objects)}
        return [(a_idx[a], o_idx[o]) for a, o in pairs]


def _read_pairs(path: Path) -> list[Pair]:
    pairs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: malformed pair line {line!r}")
        pairs.append((parts[0], parts[1]))
    return pairs


def _read_metadata_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    required = {"image", "attribute", "object", "split"}
    if rows and not required <= set(rows[0]):
        raise ValueError(f"{path}: needs columns {sorted(required)}")
    return rows


def _read_metadata_t7(path: Path) -> list[dict]:
    try:
        import torch
    except ImportError as exc:
        raise ValueError(
            f"{path}: torch is required to read .t7 metadata; "
            "convert it to metadata.csv instead") from exc
    records = torch.load(path, weights_only=False)
    out = []
    for rec in records:
        out.append({"image": rec["image"], "attribute": rec["attr"],
                    "object": rec["obj"], "split": rec["set"]})
    return out


def load_split(root: str | Path) -> SplitSpec:
    root = Path(root)
    split_dir = root / "compositional-split-natural"
    train_pairs = _read_pairs(split_dir / "train_pairs.txt")
    val_pairs = _read_pairs(split_dir / "val_pairs.txt")
    test_pairs = _read_pairs(split_dir / "test_pairs.txt")

    csv_path = root / "metadata.csv"
    t7_path = root / "metadata_compositional-split-natural.t7"
    if csv_path.exists():
        rows = _read_metadata_csv(csv_path)
    elif t7_path.exists():
        rows = _read_metadata_t7(t7_path)
    else:
        raise FileNotFoundError(f"{root}: no metadata.csv or {t7_path.name}")

    all_pairs = set(train_pairs) | set(val_pairs) | set(test_pairs)
    attributes = sorted({a for a, _ in all_pairs})
    objects = sorted({o for _, o in all_pairs})

    test_images = []
    train_images = []
    for row in rows:
        item = (row["image"], row["attribute"], row["object"])
        if row["split"] == "test":
            if (row["attribute"], row["object"]) not in set(test_pairs):
                raise ValueError(f"test image {row['image']} labeled with a "
                                 "pair outside test_pairs.txt")
            test_images.append(item)
        elif row["split"] == "train":
            train_images.append(item)
    return SplitSpec(attributes=attributes, objects=objects,
                     train_pairs=train_pairs, val_pairs=val_pairs,
                     test_pairs=test_pairs, test_images=test_images,
                     train_images=train_images)
