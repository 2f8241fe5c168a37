"""Dense f64 vector/matrix kernels shared by every other module.

All public functions are pure and thread-safe. Degenerate inputs (norms
below EPS_NORM) are signalled through return values, never exceptions.
"""

from __future__ import annotations

import numpy as np

# Norms below this are treated as degenerate (zero vector). Far below any
# legitimate norm originating from f32 file payloads.
EPS_NORM = 1e-12


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale v to unit length; returns the zero vector when ||v|| < EPS_NORM.

    The zero vector is the degeneracy flag: a successfully normalized
    vector always has norm 1.
    """
    v = as_f64(v)
    n = float(np.linalg.norm(v))
    if n < EPS_NORM:
        return np.zeros_like(v)
    return v / n


def normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise normalization of a 2-D array.

    Returns (unit_rows, norms, valid) where valid[i] is False for rows
    with norm < EPS_NORM; those rows come back as zeros.
    """
    m = as_f64(m)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    valid = norms >= EPS_NORM
    safe = np.where(valid, norms, 1.0)
    out = m / safe[:, None]
    out[~valid] = 0.0
    return out, norms, valid


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either operand is degenerate."""
    u = as_f64(u)
    v = as_f64(v)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < EPS_NORM or nv < EPS_NORM:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax. -inf entries yield exact zeros."""
    z = as_f64(logits)
    m = np.max(z)
    if not np.isfinite(m):
        if m == -np.inf:
            raise ValueError("softmax over all -inf logits is undefined")
        raise ValueError("non-finite logits")
    e = np.exp(z - m)
    return e / np.sum(e)


def entropy(p: np.ndarray) -> float:
    """Shannon entropy -sum(p log p), with 0 log 0 = 0."""
    p = as_f64(p)
    nz = p > 0.0
    return float(-np.sum(p[nz] * np.log(p[nz])))
