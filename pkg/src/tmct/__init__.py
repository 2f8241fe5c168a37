"""Online prototype adaptation and bias-sweep evaluation for
compositional zero-shot recognition, in embedding space only."""

from .container import DataError
from .data_model import (
    EngineConfig,
    FeasibilityScores,
    LabelSpace,
    PrototypeBank,
    StreamSample,
    load_feasibility,
    load_prototype_bank,
    load_stream,
    save_feasibility,
    save_prototype_bank,
    save_stream,
    shuffle_stream,
)
from .engine import EngineState, SampleOutcome, process_sample, run_stream
from .kam import KamState, RefinedPrototypes, refine_all
from .metrics import ScoreTable, SweepCurve, auc_hm, summarize, sweep, top1_report
from .objective import LossReport, Prediction, fd_gradient, fused_prediction, gradients
from .optimizer import AdamWState
from .queues import ConfidenceQueue, QueueBank
from .synth import SynthConfig, SynthResult, generate

__version__ = "0.1.0"
