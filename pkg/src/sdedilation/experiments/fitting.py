"""Least-squares rate fits for convergence and decay studies."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class SlopeFit:
    x: list
    y: list
    slope: float
    intercept: float
    r2: float
    kind: str = "loglog"

    def as_dict(self) -> dict:
        return asdict(self)


def _fit(u: np.ndarray, v: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(u, v, 1)
    pred = slope * u + intercept
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _check(x, y, min_points: int):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("abscissae and ordinates must be 1-d of equal length")
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} points for a slope fit, got {x.size}")
    if np.any(y <= 0):
        raise ValueError("ordinates must be positive for a logarithmic fit")
    return x, y


def fit_loglog(x, y, min_points: int = 4) -> SlopeFit:
    """Slope of ``log y`` against ``log x``."""
    x, y = _check(x, y, min_points)
    if np.any(x <= 0):
        raise ValueError("abscissae must be positive for a log-log fit")
    s, b, r2 = _fit(np.log(x), np.log(y))
    return SlopeFit(x.tolist(), y.tolist(), s, b, r2, "loglog")


def fit_semilog(x, y, min_points: int = 4) -> SlopeFit:
    """Slope of ``log y`` against ``x`` (exponential decay rate)."""
    x, y = _check(x, y, min_points)
    s, b, r2 = _fit(x, np.log(y))
    return SlopeFit(x.tolist(), y.tolist(), s, b, r2, "semilog")
