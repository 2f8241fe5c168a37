"""Fused multimodal prediction, the entropy and prototype-alignment
losses, and their closed-form gradients with respect to the KAM deltas.

Gradients chain through the refinement's normalization (Jacobian
(I - uu^T)/||z|| at z = base + w*delta), the fused softmax, and the
exponential visual affinity. Update weights depend only on the frozen
base prototypes, so they are constants of the differentiation, as are
the queue contents. A central finite-difference oracle over the same
loss evaluation verifies every path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EngineConfig, PrototypeBank
from .kam import KamState, RefinedPrototypes, refine_all
from .numerics import entropy, softmax
from .queues import QueueBank


@dataclass
class Prediction:
    probs: np.ndarray
    logits: np.ndarray
    pseudo_label: int       # argmax of probs, lowest index on ties
    entropy_fused: float


@dataclass
class LossReport:
    l_pe: float
    l_mcrl: float
    total: float
    grad_t: np.ndarray
    grad_v: np.ndarray


def text_only_probs(f: np.ndarray, t_tilde: np.ndarray, tau: float,
                    valid: np.ndarray | None = None,
                    keep: np.ndarray | None = None) -> np.ndarray:
    """Temperature-scaled softmax over feature/prototype cosines.

    valid masks degenerate prototype rows, keep is the feasibility mask;
    masked classes get probability exactly 0.
    """
    logits = (t_tilde @ f) / tau
    if valid is not None:
        logits = np.where(valid, logits, -np.inf)
    if keep is not None:
        logits = np.where(keep, logits, -np.inf)
    return softmax(logits)


def visual_affinity(f: np.ndarray, v_row: np.ndarray | None, beta: float) -> float:
    """exp(-beta * (1 - f.v)) for a present visual prototype, else 0."""
    if v_row is None:
        return 0.0
    return float(np.exp(-beta * (1.0 - float(f @ v_row))))


def _fused_logits(f: np.ndarray, refined: RefinedPrototypes, alpha: float,
                  beta: float, tau: float | None = None,
                  keep: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Returns (logits, affinities). Absent visual rows contribute 0
    affinity; the fused logit is a raw dot product unless tau is given."""
    logits = refined.t_tilde @ f
    logits = np.where(refined.t_valid, logits, -np.inf)
    aff = np.zeros(logits.shape[0])
    pm = refined.v_present
    if np.any(pm):
        aff[pm] = np.exp(-beta * (1.0 - refined.v_tilde[pm] @ f))
    if alpha != 0.0:
        logits = logits + alpha * aff
    if tau is not None:
        logits = logits / tau
    if keep is not None:
        logits = np.where(keep, logits, -np.inf)
    return logits, aff


def fused_prediction(f: np.ndarray, refined: RefinedPrototypes, alpha: float,
                     beta: float, tau: float | None = None,
                     keep: np.ndarray | None = None) -> Prediction:
    logits, _ = _fused_logits(f, refined, alpha, beta, tau=tau, keep=keep)
    probs = softmax(logits)
    return Prediction(probs=probs, logits=logits,
                      pseudo_label=int(np.argmax(probs)),
                      entropy_fused=entropy(probs))


def loss_pe(pred: Prediction) -> float:
    return entropy(pred.probs)


def _mcrl_pair_mask(refined: RefinedPrototypes) -> np.ndarray:
    return refined.v_present & refined.t_valid


def loss_mcrl(t_tilde: np.ndarray, v_tilde: np.ndarray, pair_mask: np.ndarray,
              tau: float) -> float:
    """Symmetric contrastive alignment of textual and visual prototypes
    over compositions with both rows present; 0 when fewer than two."""
    m = int(np.count_nonzero(pair_mask))
    if m <= 1:
        return 0.0
    T = t_tilde[pair_mask]
    V = v_tilde[pair_mask]
    S = (T @ V.T) / tau
    diag = np.diag(S)
    _, row_lse = _softmax_lse(S, axis=1)
    _, col_lse = _softmax_lse(S, axis=0)
    return float(-(2.0 * diag - row_lse - col_lse).sum() / (2.0 * m))


def _softmax_lse(S: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """(softmax along axis, logsumexp along axis) in one exp pass."""
    mx = np.max(S, axis=axis, keepdims=True)
    e = np.exp(S - mx)
    total = np.sum(e, axis=axis, keepdims=True)
    return e / total, (mx + np.log(total)).reshape(-1)


def _effective_lambda(config: EngineConfig) -> float:
    return 0.0 if config.disabled("mcrl") else config.lam


def total_loss(f: np.ndarray, bank: PrototypeBank, queue_bank: QueueBank,
               kam: KamState, config: EngineConfig,
               keep: np.ndarray | None = None) -> tuple[float, float, float]:
    """(l_pe, l_mcrl, total) for the current state; the evaluation the
    finite-difference oracle probes."""
    refined = refine_all(bank, queue_bank, kam, f, config)
    tau_f = bank.temperature if config.fused_use_tau else None
    pred = fused_prediction(f, refined, config.alpha, config.beta, tau=tau_f, keep=keep)
    l_p = loss_pe(pred)
    if config.disabled("mcrl"):
        l_m = 0.0
    else:
        l_m = loss_mcrl(refined.t_tilde, refined.v_tilde,
                        _mcrl_pair_mask(refined), bank.temperature)
    return l_p, l_m, l_p + _effective_lambda(config) * l_m


def gradients(f: np.ndarray, bank: PrototypeBank, queue_bank: QueueBank,
              kam: KamState, config: EngineConfig,
              keep: np.ndarray | None = None,
              refined: RefinedPrototypes | None = None) -> LossReport:
    """Closed-form gradient of the total loss w.r.t. both delta matrices.

    A caller that already refined the prototypes for this sample may pass
    the snapshot to avoid recomputing it.
    """
    if refined is None:
        refined = refine_all(bank, queue_bank, kam, f, config)
    tau = bank.temperature
    tau_f = tau if config.fused_use_tau else None
    logits, aff = _fused_logits(f, refined, config.alpha, config.beta,
                                tau=tau_f, keep=keep)
    p = softmax(logits)
    h = entropy(p)
    l_p = h

    # dH/dlogit_j = -p_j (log p_j + H); zero where p_j = 0.
    g_logit = np.zeros_like(p)
    nz = p > 0.0
    g_logit[nz] = -p[nz] * (np.log(p[nz]) + h)
    scale = 1.0 / tau_f if tau_f is not None else 1.0

    # Entropy term: logit_c = (f.t~_c + alpha*A_c)/tau_f.
    dT = (scale * g_logit)[:, None] * f[None, :]
    dV = np.zeros_like(dT)
    pm = refined.v_present
    if config.alpha != 0.0 and np.any(pm):
        coef = scale * config.alpha * config.beta * g_logit[pm] * aff[pm]
        dV[pm] = coef[:, None] * f[None, :]

    # Alignment term over compositions with both prototypes present.
    lam = _effective_lambda(config)
    pair_mask = _mcrl_pair_mask(refined)
    m = int(np.count_nonzero(pair_mask))
    if config.disabled("mcrl") or m <= 1:
        l_m = 0.0
    else:
        T = refined.t_tilde[pair_mask]
        V = refined.v_tilde[pair_mask]
        S = (T @ V.T) / tau
        diag = np.diag(S)
        P, row_lse = _softmax_lse(S, axis=1)
        Q, col_lse = _softmax_lse(S, axis=0)
        l_m = float(-(2.0 * diag - row_lse - col_lse).sum() / (2.0 * m))
        if lam != 0.0:
            G = (P + Q) / (2.0 * m)
            idx = np.arange(m)
            G[idx, idx] -= 1.0 / m
            dT[pair_mask] += lam * (G @ V) / tau
            dV[pair_mask] += lam * (G.T @ T) / tau

    grad_t = _chain_through_normalize(dT, refined.t_tilde, refined.t_norms,
                                      refined.w_t, refined.t_valid)
    grad_v = _chain_through_normalize(dV, refined.v_tilde, refined.v_norms,
                                      refined.w_v, refined.v_present)
    return LossReport(l_pe=l_p, l_mcrl=l_m, total=l_p + lam * l_m,
                      grad_t=grad_t, grad_v=grad_v)


def _chain_through_normalize(dL_du: np.ndarray, u: np.ndarray, norms: np.ndarray,
                             w: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Pull dL/d(unit row) back to dL/d(delta row) through
    u = z/||z||, z = base + w*delta: grad = (w/||z||)(dL - (u.dL) u)."""
    proj = dL_du - np.sum(dL_du * u, axis=1)[:, None] * u
    safe = np.where(valid, norms, 1.0)
    grad = (w / safe)[:, None] * proj
    grad[~valid] = 0.0
    return grad


def fd_gradient(f: np.ndarray, bank: PrototypeBank, queue_bank: QueueBank,
                kam: KamState, config: EngineConfig, step: float = 1e-5,
                keep: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the total loss w.r.t. every delta
    entry. Verification oracle only: O(C*d) loss evaluations."""
    grads = []
    for mat in (kam.delta_t, kam.delta_v):
        g = np.zeros_like(mat)
        it = np.nditer(mat, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = mat[idx]
            mat[idx] = orig + step
            _, _, up = total_loss(f, bank, queue_bank, kam, config, keep=keep)
            mat[idx] = orig - step
            _, _, down = total_loss(f, bank, queue_bank, kam, config, keep=keep)
            mat[idx] = orig
            g[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads[0], grads[1]
