"""Sample-adaptive, logit-only weighted product-of-experts fusion of frozen
classifier and discrete-time survival experts, with temperature calibration,
gating, baselines, metrics, a synthetic pool simulator, and numerical
verification of the fusion guarantees."""

from .calibration import CalibrationState, apply_temperatures, fit_temperatures
from .core import (
    ExpertPoolMeta,
    Label,
    LogitRecord,
    TaskKind,
    read_jsonl,
    softmax,
    validate_dataset,
    write_jsonl,
)
from .cues import GatingInput, build_gating_input, disagreement, expert_cues
from .fusion import (
    FusedPrediction,
    FusionMode,
    fuse_record,
    majority_vote,
    mean_fuse,
    product_fuse,
)
from .gate import GateParameters, TrainConfig, gate_forward, train_gate
from .metrics import CostProfile, PerfSummary, auc, c_index, eff_score, f1, rank_table
from .simulator import PoolSpec, ablation_suite, generate_pool
from .survival import fuse_survival, logits_to_hazards, risk_score, survival_nll
from .verify import ce_decomposition_check, binwise_selection_oracle, optimal_weighting_oracle

__version__ = "0.1.0"
