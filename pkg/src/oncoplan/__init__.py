"""Treatment-conditioned latent disease modeling with survival-guided planning."""

__version__ = "0.1.0"

from .actor import ActorConfig, ActorModel, LatentState, SurvivalOutput, score_action
from .cohort import (
    Cohort,
    PatientRecord,
    SurvivalLabel,
    SyntheticDynamics,
    export_cohort,
    generate_cohort,
    import_cohort,
    true_optimal_action,
)
from .encoders import HashTextEmbedder, TemporalConfig, embed_action, encode_time
from .grammar import ClinicalProfile, TherapyAction
from .losses import LossWeights
from .metrics import c_index, km_curve, log_rank, prf1
from .planner import PlanConfig, PlanResult, Schedule, inverse_evaluate, rollout
from .policy import DEFAULT_CONSTRAINTS, ConstraintSet, RuleBasedAgent, check_constraints
from .training import TrainConfig, load_checkpoint, save_checkpoint, split_patients, train

__all__ = [
    "__version__",
    "ActorConfig",
    "ActorModel",
    "LatentState",
    "SurvivalOutput",
    "score_action",
    "Cohort",
    "PatientRecord",
    "SurvivalLabel",
    "SyntheticDynamics",
    "export_cohort",
    "generate_cohort",
    "import_cohort",
    "true_optimal_action",
    "HashTextEmbedder",
    "TemporalConfig",
    "embed_action",
    "encode_time",
    "ClinicalProfile",
    "TherapyAction",
    "LossWeights",
    "c_index",
    "km_curve",
    "log_rank",
    "prf1",
    "PlanConfig",
    "PlanResult",
    "Schedule",
    "inverse_evaluate",
    "rollout",
    "DEFAULT_CONSTRAINTS",
    "ConstraintSet",
    "RuleBasedAgent",
    "check_constraints",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
    "split_patients",
    "train",
]
