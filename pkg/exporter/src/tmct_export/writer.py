"""Writer for the engine's binary container files.

The exporter couples to the adaptation engine only through these files,
so the format is implemented here against its documented layout: magic
"TMCT", u32 version, u32 header length, UTF-8 JSON header, then raw
little-endian f32 matrices in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TMCT"
FORMAT_VERSION = 1


def write_container(path: str | Path, kind: str, meta: dict,
                    matrices: list[tuple[str, np.ndarray]]) -> None:
    decls = []
    blobs = []
    for name, arr in matrices:
        a = np.ascontiguousarray(arr, dtype="<f4")
        if a.ndim != 2:
            raise ValueError(f"matrix {name!r} must be 2-D")
        decls.append({"name": name, "rows": int(a.shape[0]),
                      "dim": int(a.shape[1]), "dtype": "f4"})
        blobs.append(a.tobytes())
    header = dict(meta)
    header["kind"] = kind
    header["matrices"] = decls
    hbytes = json.dumps(header, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)


def write_bank(path: str | Path, attributes: list[str], objects: list[str],
               seen_pairs: list[tuple[int, int]], unseen_pairs: list[tuple[int, int]],
               test_pairs: list[tuple[int, int]], proto: np.ndarray,
               temperature: float) -> None:
    meta = {
        "attributes": attributes,
        "objects": objects,
        "seen_pairs": [[a, o] for a, o in seen_pairs],
        "unseen_pairs": [[a, o] for a, o in unseen_pairs],
        "test_pairs": [[a, o] for a, o in test_pairs],
        "temperature": float(temperature),
    }
    write_container(path, "bank", meta, [("proto", proto)])


def write_stream(path: str | Path, features: np.ndarray,
                 labels: list[tuple[int, int]], num_attributes: int,
                 num_objects: int) -> None:
    meta = {
        "count": int(features.shape[0]),
        "num_attributes": int(num_attributes),
        "num_objects": int(num_objects),
        "labels": [[a, o] for a, o in labels],
    }
    write_container(path, "stream", meta, [("features", features)])
