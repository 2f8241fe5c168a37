"""Binary container shared by every on-disk artifact.

Layout: magic "TMCT" | u32 format version | u32 header length | UTF-8 JSON
header | raw little-endian matrix payloads in header order. The header is
human-inspectable; payloads are bit-exact. Embedding payloads are f32
(widened to f64 on load); derived artifacts such as logit tables may
declare f64 per matrix.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TMCT"
FORMAT_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


class DataError(Exception):
    """File/validation failure with a stable machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def write_container(path: str | Path, kind: str, meta: dict,
                    matrices: list[tuple[str, np.ndarray, str]]) -> None:
    """Write a container file.

    matrices: ordered (name, array, dtype) with dtype in {"f4", "f8"};
    arrays are coerced row-major.
    """
    decls = []
    blobs = []
    for name, arr, dtype in matrices:
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype!r}")
        a = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        if a.ndim != 2:
            raise ValueError(f"matrix {name!r} must be 2-D, got shape {a.shape}")
        decls.append({"name": name, "rows": int(a.shape[0]),
                      "dim": int(a.shape[1]), "dtype": dtype})
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


def read_container(path: str | Path, expect_kind: str | None = None,
                   allow_inf: bool = False) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container; returns (header, {name: f64 array}).

    Non-finite payload entries raise DataError("non_finite"); with
    allow_inf only NaN is rejected (feasibility scores carry +inf for
    never-filtered rows). Every structural defect has a distinct code.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError("missing_file", f"{path}: {exc}") from exc
    if len(raw) < 12:
        raise DataError("truncated", f"{path}: shorter than fixed preamble")
    if raw[:4] != MAGIC:
        raise DataError("bad_magic", f"{path}: expected {MAGIC!r}, got {raw[:4]!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError("bad_version",
                        f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(raw) < 12 + hlen:
        raise DataError("truncated", f"{path}: header runs past end of file")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError("bad_header", f"{path}: {exc}") from exc
    if not isinstance(header, dict) or "kind" not in header or "matrices" not in header:
        raise DataError("bad_header", f"{path}: missing kind/matrices")
    if expect_kind is not None and header["kind"] != expect_kind:
        raise DataError("bad_kind",
                        f"{path}: kind {header['kind']!r}, expected {expect_kind!r}")

    offset = 12 + hlen
    out: dict[str, np.ndarray] = {}
    for decl in header["matrices"]:
        try:
            name, rows, dim, dtype = (decl["name"], int(decl["rows"]),
                                      int(decl["dim"]), decl["dtype"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError("bad_header", f"{path}: bad matrix declaration") from exc
        if dtype not in _DTYPES or rows < 0 or dim <= 0:
            raise DataError("bad_header", f"{path}: bad matrix declaration {decl}")
        nbytes = rows * dim * _DTYPES[dtype].itemsize
        if offset + nbytes > len(raw):
            raise DataError("truncated", f"{path}: payload {name!r} cut short")
        a = np.frombuffer(raw, dtype=_DTYPES[dtype], count=rows * dim,
                          offset=offset).reshape(rows, dim)
        offset += nbytes
        bad = np.any(np.isnan(a)) if allow_inf else not np.all(np.isfinite(a))
        if bad:
            raise DataError("non_finite",
                            f"{path}: payload {name!r} has non-finite entries")
        out[name] = a.astype(np.float64)
    if offset != len(raw):
        raise DataError("trailing_data",
                        f"{path}: {len(raw) - offset} unexpected trailing bytes")
    return header, out
