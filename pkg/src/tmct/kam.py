"""Trainable prototype deltas and the adaptive-weight refinement step.

Both delta matrices start at zero, so refinement is the identity until
the optimizer has accumulated knowledge from the stream. The update
weight for each composition is a sigmoid of its negated similarity to
the incoming feature: familiar compositions move little, unfamiliar ones
are allowed larger corrections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import DataError, read_container, write_container
from .data_model import EngineConfig, PrototypeBank
from .numerics import EPS_NORM, l2_normalize, normalize_rows
from .queues import QueueBank


@dataclass
class KamState:
    delta_t: np.ndarray  # (num_test, d)
    delta_v: np.ndarray  # (num_test, d)

    @classmethod
    def zeros(cls, num_test: int, dim: int) -> "KamState":
        return cls(np.zeros((num_test, dim)), np.zeros((num_test, dim)))


@dataclass
class RefinedPrototypes:
    """Per-sample refined prototypes plus everything the gradient chain
    needs: pre-normalization norms and the update weights actually used."""

    t_tilde: np.ndarray     # (C, d) unit rows where t_valid
    t_norms: np.ndarray     # ||t_c + w_c * dt_c||
    t_valid: np.ndarray     # bool; False marks degenerate refined rows
    w_t: np.ndarray
    v_tilde: np.ndarray     # (C, d) unit rows where v_present, zeros elsewhere
    v_norms: np.ndarray
    v_present: np.ndarray   # bool; queue non-empty and refinement non-degenerate
    w_v: np.ndarray


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def adaptive_weights(f: np.ndarray, base: np.ndarray, theta: float) -> np.ndarray:
    """w_c = sigmoid(-theta * cos(f, base_c)) for each base row.

    f must be unit-norm; base rows may be raw means and are normalized
    for the cosine. Degenerate rows get cosine 0 (w = 1/2); callers mask
    them out via their presence masks.
    """
    norms = np.sqrt(np.einsum("ij,ij->i", base, base))
    safe = np.where(norms >= EPS_NORM, norms, 1.0)
    cos = (base @ f) / safe
    cos[norms < EPS_NORM] = 0.0
    return sigmoid(-theta * cos)


def refine(base_row: np.ndarray, delta_row: np.ndarray, w: float) -> tuple[np.ndarray, bool]:
    """Refine one unit-norm base row: normalize(base + w * delta).

    Returns (row, valid). A zero delta contribution returns the base row
    bitwise unchanged (it is already unit); valid=False flags a
    degenerate (near-cancelling) combination.
    """
    contrib = w * np.asarray(delta_row, dtype=np.float64)
    if not np.any(contrib):
        return np.asarray(base_row, dtype=np.float64), True
    z = base_row + contrib
    out = l2_normalize(z)
    return out, bool(np.any(out))


def _refine_unit_rows(base: np.ndarray, delta: np.ndarray,
                      w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized refine() over unit-norm base rows."""
    contrib = w[:, None] * delta
    z = base + contrib
    out, norms, valid = normalize_rows(z)
    untouched = ~np.any(contrib, axis=1)
    if np.any(untouched):
        out[untouched] = base[untouched]
        norms[untouched] = 1.0
        valid[untouched] = True
    return out, norms, valid


def refine_textual(bank: PrototypeBank, kam: KamState, f: np.ndarray,
                   config: EngineConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (t_tilde, norms, valid, w_t) for the current sample."""
    if config.disabled("auw"):
        w_t = np.ones(bank.proto.shape[0])
    else:
        w_t = adaptive_weights(f, bank.proto, config.theta)
    t_tilde, norms, valid = _refine_unit_rows(bank.proto, kam.delta_t, w_t)
    return t_tilde, norms, valid, w_t


def refine_visual(queue_bank: QueueBank, kam: KamState, f: np.ndarray,
                  config: EngineConfig,
                  w_t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (v_tilde, norms, present, w_v).

    Visual bases are the raw queue means, so rows are always normalized
    (no fixed-point shortcut). Rows with empty queues are absent.
    """
    present = queue_bank.present.copy()
    C, d = kam.delta_v.shape
    if config.disabled("auw"):
        w_v = np.ones(C)
    elif config.visual_weight_source == "textual":
        w_v = w_t.copy()
    else:
        w_v = adaptive_weights(f, queue_bank.means, config.theta)
    y = queue_bank.means + w_v[:, None] * kam.delta_v
    v_tilde, norms, valid = normalize_rows(y)
    present &= valid
    v_tilde[~present] = 0.0
    return v_tilde, norms, present, w_v


def refine_all(bank: PrototypeBank, queue_bank: QueueBank, kam: KamState,
               f: np.ndarray, config: EngineConfig) -> RefinedPrototypes:
    t_tilde, t_norms, t_valid, w_t = refine_textual(bank, kam, f, config)
    v_tilde, v_norms, v_present, w_v = refine_visual(queue_bank, kam, f, config, w_t)
    return RefinedPrototypes(t_tilde=t_tilde, t_norms=t_norms, t_valid=t_valid,
                             w_t=w_t, v_tilde=v_tilde, v_norms=v_norms,
                             v_present=v_present, w_v=w_v)


def save_kam_checkpoint(path, kam: KamState, opt_state=None) -> None:
    """Checkpoint deltas (and optimizer moments when given) so a stream
    can be paused and resumed."""
    mats = [("delta_t", kam.delta_t, "f4"), ("delta_v", kam.delta_v, "f4")]
    meta: dict = {"step_count": 0}
    if opt_state is not None:
        meta["step_count"] = opt_state.step_count
        mats += [("m_t", opt_state.m_t, "f4"), ("u_t", opt_state.u_t, "f4"),
                 ("m_v", opt_state.m_v, "f4"), ("u_v", opt_state.u_v, "f4")]
    write_container(path, "checkpoint", meta, mats)


def load_kam_checkpoint(path) -> tuple[KamState, dict, dict[str, np.ndarray]]:
    header, mats = read_container(path, expect_kind="checkpoint")
    if "delta_t" not in mats or "delta_v" not in mats:
        raise DataError("bad_header", f"{path}: checkpoint lacks delta matrices")
    kam = KamState(delta_t=mats["delta_t"], delta_v=mats["delta_v"])
    return kam, header, mats
