"""Attribute-conditioned face synthesis.

Three cooperating parts: an attribute embedding that turns binary attribute
vectors into global and per-attribute features, a stacked coarse-to-fine image
generator with attribute-content attention, and an attribute-image matching
module whose batch contrastive loss ties generated images to their inputs.
"""

from .attributes import AttributeVector
from .config import TrainConfig, desk_config, paper_config
from .errors import (
    AfganError,
    CheckpointError,
    ConfigError,
    EncoderUnavailableError,
    TrainingDivergedError,
)
from .harness import (
    AfganModel,
    EvalReport,
    build_model,
    eval_attr_accuracy,
    eval_msssim,
    export_attention_maps,
    load_model,
    pretrain_scm,
    sample,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeVector",
    "TrainConfig",
    "desk_config",
    "paper_config",
    "AfganError",
    "ConfigError",
    "CheckpointError",
    "EncoderUnavailableError",
    "TrainingDivergedError",
    "AfganModel",
    "EvalReport",
    "build_model",
    "pretrain_scm",
    "train",
    "sample",
    "load_model",
    "eval_attr_accuracy",
    "eval_msssim",
    "export_attention_maps",
    "__version__",
]
