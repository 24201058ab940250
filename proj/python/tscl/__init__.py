"""Time-series contrastive pretraining: Python access to the C++ core."""

from ._tscl import (
    ConfigError,
    IoError,
    NumericalError,
    TsclError,
    evaluate,
    load_dataset,
    metrics,
    one_cycle_lr,
    pretrain,
    report,
    resampling_pair,
    synth,
    upsample,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericalError",
    "TsclError",
    "evaluate",
    "load_dataset",
    "metrics",
    "one_cycle_lr",
    "pretrain",
    "report",
    "resampling_pair",
    "synth",
    "upsample",
]
