"""Seeded analytic-vs-finite-difference gradient verification.

Small random instances mix empty, partial, and full queues, nonzero
deltas, both visual weight sources, and optional feasibility masking, so
every term of the loss and every branch of the chain rule gets probed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EngineConfig, LabelSpace, PrototypeBank
from .kam import KamState
from .numerics import l2_normalize
from .objective import fd_gradient, gradients
from .queues import QueueBank


@dataclass
class GradCheckResult:
    seed: int
    max_rel_err: float
    passed: bool


def random_instance(seed: int, max_classes: int = 6, max_dim: int = 8):
    """Build (f, bank, queue_bank, kam, config, keep) for one check."""
    rng = np.random.default_rng(seed)
    n_a = int(rng.integers(2, 4))
    n_o = max(2, int(np.ceil(max_classes / n_a)))
    pairs = [(a, o) for a in range(n_a) for o in range(n_o)]
    pairs = pairs[:max_classes]
    c = len(pairs)
    d = int(rng.integers(3, max_dim + 1))
    # Every pair in range of the declared vocabularies; split roughly in half.
    seen = pairs[: c // 2]
    unseen = pairs[c // 2:]
    space = LabelSpace(attributes=[f"a{i}" for i in range(n_a)],
                       objects=[f"o{j}" for j in range(n_o)],
                       seen_pairs=seen, unseen_pairs=unseen, test_pairs=pairs)
    proto = rng.normal(size=(c, d))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)
    bank = PrototypeBank(proto=proto, temperature=float(rng.uniform(0.05, 0.8)))

    K = int(rng.integers(1, 4))
    qb = QueueBank(c, d, K)
    for idx in range(c):
        fill = int(rng.integers(0, K + 1))  # empty, partial, or full
        for _ in range(fill):
            qb.consider(idx, float(rng.uniform(0.0, 3.0)),
                        l2_normalize(rng.normal(size=d)))

    kam = KamState(delta_t=rng.normal(0.0, 0.05, size=(c, d)),
                   delta_v=rng.normal(0.0, 0.05, size=(c, d)))
    config = EngineConfig(
        K=K,
        alpha=float(rng.uniform(0.2, 1.5)),
        beta=float(rng.uniform(2.0, 12.0)),
        theta=float(rng.uniform(0.5, 3.0)),
        lam=float(rng.uniform(0.2, 3.0)),
        lr=1e-4,
        visual_weight_source=("per_modality", "textual")[int(rng.integers(0, 2))],
        fused_use_tau=bool(rng.integers(0, 2)),
    )
    keep = None
    if rng.integers(0, 4) == 0 and c > 2:
        keep = np.ones(c, dtype=bool)
        keep[int(rng.integers(0, c))] = False
    f = l2_normalize(rng.normal(size=d))
    return f, bank, qb, kam, config, keep


def check_instance(seed: int, step: float = 1e-5,
                   tol: float = 1e-4) -> GradCheckResult:
    f, bank, qb, kam, config, keep = random_instance(seed)
    report = gradients(f, bank, qb, kam, config, keep=keep)
    fd_t, fd_v = fd_gradient(f, bank, qb, kam, config, step=step, keep=keep)
    err = max(_max_rel_err(report.grad_t, fd_t), _max_rel_err(report.grad_v, fd_v))
    return GradCheckResult(seed=seed, max_rel_err=err, passed=err <= tol)


def run_gradcheck(num_seeds: int = 20, start_seed: int = 0,
                  step: float = 1e-5, tol: float = 1e-4) -> list[GradCheckResult]:
    return [check_instance(s, step=step, tol=tol)
            for s in range(start_seed, start_seed + num_seeds)]


def _max_rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))
