"""Synthetic dataset fixtures in the on-disk layout the exporter reads.

Images carry their composition as a per-pair base pattern plus pixel
noise, so hash-projection features cluster by class and fine-tuning has
signal to learn from. The default profile mirrors the fine-grained-shoes
benchmark's split statistics: 16 attributes, 12 objects, 83 training
pairs, 18+18 test pairs, 2914 test images.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class FixtureConfig:
    num_attributes: int = 16
    num_objects: int = 12
    train_pairs: int = 83
    val_seen: int = 15
    val_unseen: int = 15
    test_seen: int = 18
    test_unseen: int = 18
    test_images: int = 2914
    train_images_per_pair: int = 6
    image_side: int = 16
    pixel_noise: float = 0.12
    seed: int = 0


def generate_fixture(root: str | Path, cfg: FixtureConfig = FixtureConfig()) -> dict:
    """Write the dataset tree; returns summary counts."""
    root = Path(root)
    rng = np.random.default_rng(cfg.seed)
    attrs = [f"attr{i:02d}" for i in range(cfg.num_attributes)]
    objs = [f"obj{j:02d}" for j in range(cfg.num_objects)]
    all_pairs = list(itertools.product(attrs, objs))
    need = cfg.train_pairs + cfg.val_unseen + cfg.test_unseen
    if need > len(all_pairs):
        raise ValueError("not enough attribute/object pairs for the split")

    order = rng.permutation(len(all_pairs))
    train_pairs = [all_pairs[i] for i in order[:cfg.train_pairs]]
    rest = [all_pairs[i] for i in order[cfg.train_pairs:]]
    val_unseen = rest[:cfg.val_unseen]
    test_unseen = rest[cfg.val_unseen:cfg.val_unseen + cfg.test_unseen]
    train_idx = rng.permutation(cfg.train_pairs)
    val_seen = [train_pairs[i] for i in train_idx[:cfg.val_seen]]
    test_seen = [train_pairs[i] for i in train_idx[cfg.val_seen:cfg.val_seen + cfg.test_seen]]
    test_pairs = test_seen + test_unseen
    val_pairs = val_seen + val_unseen

    split_dir = root / "compositional-split-natural"
    split_dir.mkdir(parents=True, exist_ok=True)
    for name, pairs in (("train_pairs.txt", train_pairs),
                        ("val_pairs.txt", val_pairs),
                        ("test_pairs.txt", test_pairs)):
        (split_dir / name).write_text(
            "".join(f"{a} {o}\n" for a, o in pairs), encoding="utf-8")

    side = cfg.image_side
    base_patterns = {}
    for pair in set(train_pairs) | set(test_pairs) | set(val_pairs):
        prng = np.random.default_rng(
            abs(hash((cfg.seed, pair[0], pair[1]))) % (2 ** 63))
        base_patterns[pair] = prng.uniform(0.0, 1.0, size=(side, side, 3))

    rows = ["image,attribute,object,split"]

    def emit(pair, split_name, serial):
        a, o = pair
        noisy = np.clip(base_patterns[pair]
                        + rng.normal(0.0, cfg.pixel_noise, size=(side, side, 3)),
                        0.0, 1.0)
        rel = f"images/{a}_{o}/{split_name}_{serial:05d}.png"
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray((noisy * 255).astype(np.uint8)).save(path)
        rows.append(f"{rel},{a},{o},{split_name}")

    for pair in train_pairs:
        for k in range(cfg.train_images_per_pair):
            emit(pair, "train", len(rows))
    # Spread the test images over the test pairs, remainder to the first few.
    per, extra = divmod(cfg.test_images, len(test_pairs))
    for idx, pair in enumerate(test_pairs):
        for k in range(per + (1 if idx < extra else 0)):
            emit(pair, "test", len(rows))

    (root / "metadata.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return {
        "attributes": len(attrs),
        "objects": len(objs),
        "train_pairs": len(train_pairs),
        "test_pairs": len(test_pairs),
        "train_images": cfg.train_pairs * cfg.train_images_per_pair,
        "test_images": cfg.test_images,
    }
