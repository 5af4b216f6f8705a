"""Label distribution learning for age estimation from fixed-size embeddings."""

__version__ = "0.1.0"

from .errors import (
    DataFormatError,
    InvalidParameterError,
    InvalidStateError,
    LDLError,
    TrainingDivergedError,
)
from .grid import (
    AgeGrid,
    GaussianTargetSpec,
    LabelDistribution,
    OutOfGridWarning,
    discretize_gaussian,
    distribution_variance,
    expected_age,
)
from .losses import (
    HybridLossConfig,
    LossBreakdown,
    hybrid_loss,
    hybrid_loss_gradient,
    kl_loss,
    l1_age_loss,
    softmax,
    variance_loss,
)
from .model import ModelHead, backward, forward, init_head, load_checkpoint, save_checkpoint
from .inference import (
    ClipPrediction,
    EvalResult,
    evaluate,
    predict_ages,
    predict_clip,
    predict_utterance,
)
from .data import LabeledSample, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .trainer import (
    MethodConfig,
    TrainConfig,
    TrainReport,
    fit,
    method_config,
    split_train_validation,
)

__all__ = [
    "AgeGrid", "ClipPrediction", "DataFormatError", "EvalResult", "GaussianTargetSpec",
    "HybridLossConfig", "InvalidParameterError", "InvalidStateError", "LDLError",
    "LabelDistribution", "LabeledSample", "LossBreakdown", "MethodConfig", "ModelHead",
    "OutOfGridWarning", "SyntheticSpec", "TrainConfig", "TrainReport", "TrainingDivergedError",
    "backward", "discretize_gaussian", "distribution_variance", "evaluate", "expected_age",
    "fit", "forward", "generate_synthetic", "hybrid_loss", "hybrid_loss_gradient",
    "init_head", "kl_loss", "l1_age_loss", "load_checkpoint", "load_dataset", "method_config",
    "predict_ages", "predict_clip", "predict_utterance", "save_checkpoint", "save_dataset",
    "softmax", "split_train_validation", "variance_loss",
]
