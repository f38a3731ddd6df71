"""Graph contrastive self-supervised learning: alteration-based augmentation,
a momentum-queue contrastive loss, and pretraining / regularization / frozen
encoder regimes for graph classification."""

from .augment import (AlterationOp, AugmentConfig, AugmentedGraph, OpKind, sample_augmentation)
from .contrastive import CSSLConfig, KeyQueue, contrastive_loss, cssl_step
from .encoder import EncoderConfig, encode
from .errors import (AugmentationExhausted, ConfigError, DataNotFound, FormatError,
                     GraphCSSLError, InvalidArgument, NotApplicable, ShapeError)
from .graph import LabeledGraph, make_graph
from .pipelines import RunResult, Splits, TrainConfig, run_regime
from .tudata import Dataset, SplitPlan, load_tu, make_splits

__version__ = "0.1.0"

__all__ = [
    "AlterationOp", "AugmentConfig", "AugmentedGraph", "AugmentationExhausted", "CSSLConfig",
    "ConfigError", "DataNotFound", "Dataset", "EncoderConfig", "FormatError", "GraphCSSLError",
    "InvalidArgument", "KeyQueue", "LabeledGraph", "NotApplicable", "OpKind", "RunResult",
    "ShapeError", "SplitPlan", "Splits", "TrainConfig", "contrastive_loss", "cssl_step", "encode",
    "load_tu", "make_graph", "make_splits", "run_regime", "sample_augmentation",
]
