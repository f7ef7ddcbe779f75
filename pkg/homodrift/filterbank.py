"""Exponential filter of discrete observations.

    z_0 = 0,    z_n = delta * sum_{k<n} exp(-delta (n - k)) x_k

which obeys the one-step recursion `z_{n+1} = exp(-delta) (z_n + delta x_n)`.
Vector observations are filtered coordinate by coordinate along axis 0.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
from immutable import Immutable
from scipy.signal import lfilter

from homodrift.exceptions import ConfigError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


class FilterSpec(Immutable):
    """Kernel `k(r) = exp(-rate r)`; only the unit rate is used by the estimators."""

    delta: float
    rate: float = 1.0

    def __post_init__(self: FilterSpec) -> None:
        if not self.delta > 0:
            msg = f'delta must be positive, got {self.delta}'
            raise ConfigError(msg)
        if not self.rate > 0:
            msg = f'filter rate must be positive, got {self.rate}'
            raise ConfigError(msg)

    @property
    def decay(self: FilterSpec) -> float:
        return math.exp(-self.rate * self.delta)

    def stationary_gain(self: FilterSpec) -> float:
        """Limit of `z_n / c` for a constant series `x = c`."""
        return self.delta * self.decay / (1 - self.decay)


def _as_series(x: ArrayLike) -> NDArray[np.float64]:
    series = np.asarray(x, dtype=float)
    if series.ndim == 0 or len(series) < 1:
        msg = 'the filter needs at least one observation'
        raise ConfigError(msg)
    return series


def filter_direct(x: ArrayLike, delta: float, rate: float = 1.0) -> NDArray[np.float64]:
    """Quadratic-cost reference evaluation of the filter sum."""
    spec = FilterSpec(delta=delta, rate=rate)
    series = _as_series(x)
    n = len(series)
    lags = np.arange(n)[:, None] - np.arange(n)[None, :]
    kernel = spec.delta * np.exp(-spec.rate * spec.delta * np.maximum(lags, 0))
    weights = np.where(lags > 0, kernel, 0.0)
    return np.tensordot(weights, series, axes=1)


def filter_recurrent(
    x: ArrayLike,
    delta: float,
    rate: float = 1.0,
) -> NDArray[np.float64]:
    """Linear-cost evaluation through the one-step recursion."""
    spec = FilterSpec(delta=delta, rate=rate)
    series = _as_series(x)
    decay = spec.decay
    # z_n = decay z_{n-1} + delta decay x_{n-1}, a first order IIR filter with one lag
    filtered = np.zeros_like(series)
    if len(series) > 1:
        filtered[1:] = lfilter([spec.delta * decay], [1.0, -decay], series[:-1], axis=0)
    return filtered


def filter_continuous(
    x_fine: ArrayLike,
    h: float,
    rate: float = 1.0,
) -> NDArray[np.float64]:
    """Trapezoid rule for `Z_t = int_0^t exp(-rate (t - s)) X_s ds` on a fine grid."""
    series = _as_series(x_fine)
    decay = math.exp(-rate * h)
    # Z_{k+1} = decay Z_k + h/2 (decay X_k + X_{k+1})
    filtered = np.zeros_like(series)
    if len(series) > 1:
        forcing = 0.5 * h * (decay * series[:-1] + series[1:])
        filtered[1:] = lfilter([1.0], [1.0, -decay], forcing, axis=0)
    return filtered
