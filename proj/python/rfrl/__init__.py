"""Python bindings for the rfrl C++ core."""

from ._core import (
    Config,
    ConfigError,
    ContractError,
    DatasetError,
    Error,
    FormatError,
    Model,
    NumericsError,
    ShapeError,
    confusion,
    gradcheck,
    metrics,
    synth,
    train,
)

__all__ = [
    "Config",
    "ConfigError",
    "ContractError",
    "DatasetError",
    "Error",
    "FormatError",
    "Model",
    "NumericsError",
    "ShapeError",
    "confusion",
    "gradcheck",
    "metrics",
    "synth",
    "train",
]
