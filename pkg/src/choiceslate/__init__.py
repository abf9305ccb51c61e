"""Choice-aware engagement prediction and slate selection over tweet topics.

Typical flow: cluster tweets into topics (``gsdmm``), bin a timestamped
interaction log into per-period engagement tensors (``pipeline``), fit the
choice-aware net (``net``) and the per-topic logit (``logit``), then pick
topic slates (``optimizer``) and compare models (``evaluation``).
"""

from .errors import CheckpointError, ConfigError, InputError, StageOrderError
from .evaluation import EvalReport, auc, evaluate_model, mean_bce
from .gsdmm import ClusteringConfig, Corpus, TopicAssignment, fit_gsdmm
from .logit import LogitConfig, LogitModel, train_logit
from .net import EngagementNet, ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from .optimizer import SlateProblem, SlateResult, exhaustive_slate, greedy_slate, optimize_slates
from .pipeline import EngagementTensor, InteractionLog, PeriodGrid, build_all_inputs, split_periods
from .simulator import SimConfig, generate_log

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ClusteringConfig",
    "ConfigError",
    "Corpus",
    "EngagementNet",
    "EngagementTensor",
    "EvalReport",
    "InputError",
    "InteractionLog",
    "LogitConfig",
    "LogitModel",
    "ModelConfig",
    "PeriodGrid",
    "SimConfig",
    "SlateProblem",
    "SlateResult",
    "StageOrderError",
    "TopicAssignment",
    "TrainConfig",
    "auc",
    "build_all_inputs",
    "evaluate_model",
    "exhaustive_slate",
    "fit_gsdmm",
    "generate_log",
    "greedy_slate",
    "load_checkpoint",
    "mean_bce",
    "optimize_slates",
    "save_checkpoint",
    "split_periods",
    "train",
    "train_logit",
]
