"""Automatic modulation classification from raw I/Q samples.

A self-contained stack: a reverse-mode autodiff tensor engine, a
spectrum-correcting attention classifier built on it, a synthetic
modulation dataset generator with channel impairments, a training loop,
and evaluation metrics. The `amcnet` console script ties them together.
"""

from . import tensor
from .datagen import (
    CLASS_NAMES,
    ChannelParams,
    Dataset,
    DatasetFormatError,
    DatasetLabelError,
    DatasetTruncatedError,
    ModulationFormat,
    apply_channel,
    generate_dataset,
    modulate,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .metrics import ConfusionMatrix, EvalReport, build_report, compute_metrics, per_snr_accuracy
from .model import AmcNetModel, ModelConfig, load_model, save_model
from .spectrum import SpectrumPair, dft, idft
from .tensor import ConfigError, ShapeError, Tensor, no_grad
from .training import (
    AdamState,
    EarlyStopper,
    TrainConfig,
    TrainResult,
    adam_step,
    evaluate,
    fit,
    xavier_init,
)
from .validation import check_iq_array, check_labels

__version__ = "0.1.0"

__all__ = [
    "AmcNetClassifier",
    "AmcNetModel",
    "AdamState",
    "CLASS_NAMES",
    "ChannelParams",
    "ConfigError",
    "ConfusionMatrix",
    "Dataset",
    "DatasetFormatError",
    "DatasetLabelError",
    "DatasetTruncatedError",
    "EarlyStopper",
    "EvalReport",
    "ModelConfig",
    "ModulationFormat",
    "ShapeError",
    "SpectrumPair",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "apply_channel",
    "build_report",
    "check_iq_array",
    "check_labels",
    "compute_metrics",
    "dft",
    "evaluate",
    "fit",
    "generate_dataset",
    "idft",
    "load_model",
    "modulate",
    "no_grad",
    "per_snr_accuracy",
    "read_dataset",
    "save_model",
    "split_dataset",
    "tensor",
    "write_dataset",
    "xavier_init",
]


def __getattr__(name):
    # the sklearn import behind the estimator is slow; load it on demand
    if name == "AmcNetClassifier":
        from .estimator import AmcNetClassifier

        return AmcNetClassifier
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
