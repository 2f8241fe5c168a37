"""Online per-sample adaptation loop.

For each incoming feature, in order: refine textual prototypes with the
current deltas, score the text-only distribution (temperature softmax)
for admission entropy and pseudo-label, offer the feature to that
pseudo-label's queue, rebuild visual prototypes, emit the fused
prediction, and only then compute the loss gradients and take one
optimizer step. The emitted prediction never sees the update that the
sample itself triggers, and ground-truth labels never enter this module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data_model import EngineConfig, FeasibilityScores, LabelSpace, PrototypeBank
from .kam import KamState, RefinedPrototypes, refine_textual, refine_visual
from .numerics import entropy, softmax
from .objective import Prediction, fused_prediction, gradients
from .optimizer import AdamWState, step as adamw_step
from .queues import QueueBank


@dataclass
class SampleOutcome:
    prediction: Prediction
    admitted: bool
    pseudo_label: int        # admission pseudo-label (text-only argmax)
    l_pe: float
    l_mcrl: float
    loss: float
    latency_s: float         # feature-in to prediction-out, excludes update
    update_s: float
    incident: str | None = None


class EngineState:
    def __init__(self, space: LabelSpace, bank: PrototypeBank, config: EngineConfig,
                 feasibility: FeasibilityScores | None = None):
        self.space = space
        self.bank = bank
        self.config = config
        c, d = bank.proto.shape
        self.queue_bank = QueueBank(c, d, config.K)
        self.kam = KamState.zeros(c, d)
        self.opt = AdamWState.init(c, d, lr=config.lr, betas=config.adamw_betas,
                                   eps=config.adamw_eps,
                                   weight_decay=config.adamw_weight_decay)
        self.sample_counter = 0
        self.events: list[dict] = []
        self.keep: np.ndarray | None = None
        if config.open_world:
            if feasibility is None:
                raise ValueError("open-world mode requires feasibility scores")
            self.keep = feasibility.score >= config.feasibility_threshold
            if not np.any(self.keep):
                raise ValueError("feasibility threshold filters every composition")


def apply_feasibility(logits: np.ndarray, scores: np.ndarray,
                      threshold: float) -> np.ndarray:
    """Hard mask: compositions scoring below threshold get logit -inf.

    Seen compositions carry +inf scores by construction and are never
    filtered.
    """
    return np.where(scores >= threshold, logits, -np.inf)


def process_sample(state: EngineState, f: np.ndarray) -> SampleOutcome:
    config = state.config
    bank = state.bank
    if f.shape != (bank.dim,):
        raise ValueError(f"feature shape {f.shape}, expected ({bank.dim},)")

    t0 = time.perf_counter()

    # (1) textual refinement with the current deltas
    t_tilde, t_norms, t_valid, w_t = refine_textual(bank, state.kam, f, config)

    # (2) admission entropy and pseudo-label from the text-only softmax
    source = t_tilde if config.admission_prototypes == "refined" else bank.proto
    adm_logits = (source @ f) / bank.temperature
    adm_logits = np.where(t_valid, adm_logits, -np.inf)
    if state.keep is not None:
        adm_logits = np.where(state.keep, adm_logits, -np.inf)
    adm_probs = softmax(adm_logits)
    h = entropy(adm_probs)
    c_p = int(np.argmax(adm_probs))

    # (3) queue admission under the pseudo-label
    admitted = False
    if not config.disabled("queue"):
        admitted = state.queue_bank.consider(c_p, h, f)

    # (4) visual prototypes from the post-admission queues
    v_tilde, v_norms, v_present, w_v = refine_visual(state.queue_bank, state.kam,
                                                     f, config, w_t)
    refined = RefinedPrototypes(t_tilde=t_tilde, t_norms=t_norms, t_valid=t_valid,
                                w_t=w_t, v_tilde=v_tilde, v_norms=v_norms,
                                v_present=v_present, w_v=w_v)

    # (5) fused prediction -- the emitted answer
    tau_f = bank.temperature if config.fused_use_tau else None
    pred = fused_prediction(f, refined, config.alpha, config.beta,
                            tau=tau_f, keep=state.keep)
    latency = time.perf_counter() - t0

    # (6) deferred update of the deltas, reusing the step-4/5 snapshot
    t1 = time.perf_counter()
    incident = None
    report = gradients(f, bank, state.queue_bank, state.kam, config,
                       keep=state.keep, refined=refined)
    grad_t = report.grad_t
    grad_v = report.grad_v
    if config.disabled("tkam"):
        grad_t = np.zeros_like(grad_t)
    if config.disabled("vkam"):
        grad_v = np.zeros_like(grad_v)
    ok = adamw_step(state.opt, state.kam.delta_t, state.kam.delta_v, grad_t, grad_v)
    if not ok:
        incident = "non-finite gradient; optimizer step skipped"
        state.events.append({"sample": state.sample_counter, "incident": incident})
    update_s = time.perf_counter() - t1

    state.sample_counter += 1
    return SampleOutcome(prediction=pred, admitted=admitted, pseudo_label=c_p,
                         l_pe=report.l_pe, l_mcrl=report.l_mcrl, loss=report.total,
                         latency_s=latency, update_s=update_s, incident=incident)


def run_stream(state: EngineState, features: list[np.ndarray]) -> list[SampleOutcome]:
    """Strictly sequential pass; each sample is used exactly once, in order."""
    return [process_sample(state, f) for f in features]
