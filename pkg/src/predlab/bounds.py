"""Entropy <-> error conversions for additive noise, and R^2 indicators."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass


class NoiseKind(str, enum.Enum):
    UNIFORM = "uniform"
    LAPLACIAN = "laplacian"
    GAUSSIAN = "gaussian"


# MSE >= coeff * exp(2H)
MSE_COEFF = {
    NoiseKind.UNIFORM: 1.0 / 12.0,
    NoiseKind.LAPLACIAN: 1.0 / (2.0 * math.e ** 2),
    NoiseKind.GAUSSIAN: 1.0 / (2.0 * math.pi * math.e),
}
# MAE >= coeff * exp(H); each coefficient reproduces the family's mean absolute deviation
MAE_COEFF = {
    NoiseKind.UNIFORM: 0.25,
    NoiseKind.LAPLACIAN: 1.0 / (2.0 * math.e),
    NoiseKind.GAUSSIAN: 1.0 / (math.pi * math.sqrt(math.e)),
}
R2_COEFF = {"paper": 1.0 / 12.0, "gaussian": 1.0 / (2.0 * math.pi * math.e)}


def _kind(kind) -> NoiseKind:
    return kind if isinstance(kind, NoiseKind) else NoiseKind(str(kind).lower())


def noise_entropy(kind, param: float) -> float:
    """Differential entropy of the noise: uniform width, Laplace scale, or Gaussian std."""
    kind = _kind(kind)
    if not param > 0:
        raise ValueError("noise parameter must be positive")
    if kind is NoiseKind.UNIFORM:
        return math.log(param)
    if kind is NoiseKind.LAPLACIAN:
        return 1.0 + math.log(2.0 * param)
    return 0.5 * math.log(2.0 * math.pi * math.e * param * param)


def noise_param_for_mse(kind, target_mse: float) -> float:
    """Parameter whose noise variance equals `target_mse`."""
    kind = _kind(kind)
    if not target_mse > 0:
        raise ValueError("target MSE must be positive")
    if kind is NoiseKind.UNIFORM:
        return math.sqrt(12.0 * target_mse)
    if kind is NoiseKind.LAPLACIAN:
        return math.sqrt(target_mse / 2.0)
    return math.sqrt(target_mse)


def noise_variance(kind, param: float) -> float:
    kind = _kind(kind)
    if kind is NoiseKind.UNIFORM:
        return param * param / 12.0
    if kind is NoiseKind.LAPLACIAN:
        return 2.0 * param * param
    return param * param


def noise_mae(kind, param: float) -> float:
    kind = _kind(kind)
    if kind is NoiseKind.UNIFORM:
        return param / 4.0
    if kind is NoiseKind.LAPLACIAN:
        return param
    return param * math.sqrt(2.0 / math.pi)


def mse_lower_bound(h: float, kind) -> float:
    if not math.isfinite(h):
        raise ValueError("entropy must be finite")
    return MSE_COEFF[_kind(kind)] * math.exp(2.0 * h)


def mae_lower_bound(h: float, kind) -> float:
    if not math.isfinite(h):
        raise ValueError("entropy must be finite")
    return MAE_COEFF[_kind(kind)] * math.exp(h)


def r2_indicator(h: float, var_y: float, mode: str = "paper") -> float:
    """Upper bound on R^2 implied by conditional entropy `h` for a target of variance `var_y`."""
    if not var_y > 0:
        raise ValueError("var_y must be positive")
    if mode not in R2_COEFF:
        raise ValueError(f"unknown r2 mode {mode!r}")
    return 1.0 - R2_COEFF[mode] * math.exp(2.0 * h) / var_y


@dataclass
class IndicatorReport:
    r2_knifecp: float
    r2_knifedp: float
    r2_lmcp: float
    mse_bound_gaussian: float
    mae_bound_laplacian: float
    ordering_ok: bool
    mode: str = "paper"

    def to_dict(self) -> dict:
        return asdict(self)


def indicator_report(report, var_y: float, mode: str = "paper") -> IndicatorReport:
    """R^2 indicators for each estimator plus the lowest MSE/MAE bounds from h_knifecp."""
    r_cp = r2_indicator(report.h_knifecp, var_y, mode)
    r_dp = r2_indicator(report.h_knifedp, var_y, mode)
    r_lmc = r2_indicator(report.h_lmcp, var_y, mode)
    return IndicatorReport(
        r2_knifecp=r_cp,
        r2_knifedp=r_dp,
        r2_lmcp=r_lmc,
        mse_bound_gaussian=mse_lower_bound(report.h_knifecp, NoiseKind.GAUSSIAN),
        mae_bound_laplacian=mae_lower_bound(report.h_knifecp, NoiseKind.LAPLACIAN),
        ordering_ok=bool(r_dp <= r_cp <= r_lmc),
        mode=mode,
    )
