"""Decoupled-weight-decay Adam over the two delta matrices.

One step per stream sample (batch size 1). Deterministic: two identical
gradient sequences produce bitwise-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-3
    weight_decay: float = 1e-3
    step_count: int = 0
    m_t: np.ndarray = field(default=None)  # first/second moments per matrix
    u_t: np.ndarray = field(default=None)
    m_v: np.ndarray = field(default=None)
    u_v: np.ndarray = field(default=None)

    @classmethod
    def init(cls, num_test: int, dim: int, lr: float,
             betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-3,
             weight_decay: float = 1e-3) -> "AdamWState":
        shape = (num_test, dim)
        return cls(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay,
                   m_t=np.zeros(shape), u_t=np.zeros(shape),
                   m_v=np.zeros(shape), u_v=np.zeros(shape))


def step(state: AdamWState, delta_t: np.ndarray, delta_v: np.ndarray,
         grad_t: np.ndarray, grad_v: np.ndarray) -> bool:
    """Apply one AdamW step in place to both matrices.

    A non-finite gradient skips the parameter/moment update (the stream
    must not die) but the step counter still advances one per sample.
    Returns False on skip so the caller can log the incident.
    """
    state.step_count += 1
    if not (np.all(np.isfinite(grad_t)) and np.all(np.isfinite(grad_v))):
        return False
    b1, b2 = state.betas
    t = state.step_count
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, g, m, u in ((delta_t, grad_t, state.m_t, state.u_t),
                       (delta_v, grad_v, state.m_v, state.u_v)):
        m *= b1
        m += (1.0 - b1) * g
        u *= b2
        u += (1.0 - b2) * np.square(g)
        m_hat = m / bc1
        u_hat = u / bc2
        p -= state.lr * (m_hat / (np.sqrt(u_hat) + state.eps)
                         + state.weight_decay * p)
    return True
