"""Relativistic quantum key distribution: simulator and analysis toolkit."""

__version__ = "0.1.0"

from relqkd.core_math import (  # noqa: E402
    KeyRateInputs,
    SignalAlphabet,
    binary_entropy,
    holevo_bound,
    secret_key_rate,
    state_overlap,
)
from relqkd.protocol import SeriesConfig, SeriesReport, demo_config, run_series  # noqa: E402

__all__ = [
    "KeyRateInputs",
    "SignalAlphabet",
    "SeriesConfig",
    "SeriesReport",
    "binary_entropy",
    "holevo_bound",
    "demo_config",
    "run_series",
    "secret_key_rate",
    "state_overlap",
]
