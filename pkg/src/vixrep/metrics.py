"""Error and association measures, plus the returns regression."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    mape_percent: float
    pearson_r: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OLSResult:
    slope: float
    intercept: float
    r_squared: float
    t_stat_slope_lt_1: float
    slope_se: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} points")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return float(np.mean(d * d))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def mape(a, b) -> float:
    """Mean absolute percentage error of ``a`` against reference ``b``."""
    a, b = _pair(a, b)
    if np.any(b == 0):
        raise ValueError("mape undefined for a zero reference value")
    return float(np.mean(np.abs(a - b) / np.abs(b)) * 100.0)


def pearson(a, b) -> float:
    a, b = _pair(a, b, min_len=2)
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(np.dot(da, da)))
    sb = math.sqrt(float(np.dot(db, db)))
    if sa == 0 or sb == 0:
        raise ValueError("pearson undefined for a zero-variance series")
    r = float(np.dot(da, db)) / (sa * sb)
    return max(-1.0, min(1.0, r))


def report(a, b) -> MetricsReport:
    """All four measures of ``a`` (estimate) against ``b`` (reference).

    Correlation is reported as nan when either side is constant.
    """
    try:
        r = pearson(a, b)
    except ValueError:
        r = math.nan
    return MetricsReport(mse(a, b), mae(a, b), mape(a, b), r, int(np.size(a)))


def returns(series) -> np.ndarray:
    v = np.asarray(series, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 values")
    if np.any(v <= 0):
        raise ValueError("returns need positive values")
    return v[1:] / v[:-1] - 1.0


def ols(x, y) -> OLSResult:
    """Fit ``y = intercept + slope * x``; the t statistic tests ``slope == 1``."""
    x, y = _pair(x, y, min_len=3)
    n = x.size
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    sxx = float(np.dot(dx, dx))
    if sxx == 0:
        raise ValueError("x has zero variance")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = my - slope * mx
    resid = dy - slope * dx
    sse = float(np.dot(resid, resid))
    syy = float(np.dot(dy, dy))
    r2 = 1.0 - sse / syy if syy > 0 else 1.0
    se = math.sqrt(sse / (n - 2) / sxx)
    if se == 0:
        t = 0.0 if slope == 1 else math.copysign(math.inf, slope - 1)
    else:
        t = (slope - 1.0) / se
    return OLSResult(slope, float(intercept), r2, t, se, n)
