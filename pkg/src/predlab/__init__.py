"""Predictability estimates from conditional-entropy bounds."""
__version__ = "0.1.0"

from .bounds import NoiseKind, mae_lower_bound, mse_lower_bound, noise_entropy, r2_indicator  # noqa: E402
from .estimators import EstimateReport, run_algorithm1  # noqa: E402
from .trainer import TrainConfig  # noqa: E402

__all__ = [
    "EstimateReport",
    "NoiseKind",
    "TrainConfig",
    "mae_lower_bound",
    "mse_lower_bound",
    "noise_entropy",
    "r2_indicator",
    "run_algorithm1",
]
