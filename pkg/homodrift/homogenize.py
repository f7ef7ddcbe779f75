"""Homogenized coefficients of the two-scale Langevin dynamics.

In one dimension the cell problem has a closed-form corrector, so the effective
coefficient reduces to two periodic quadratures,

    K = L**2 / (C_sigma * C_hat_sigma),
    C_sigma = int_0^L exp(-p/sigma),  C_hat_sigma = int_0^L exp(p/sigma),

and the homogenized drift and diffusion are `A = K alpha` and `Sigma = K sigma`.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Callable

import numpy as np
from immutable import Immutable
from scipy.integrate import simpson

from homodrift.constants import DEFAULT_N_QUAD
from homodrift.exceptions import ConfigError, QuadratureError
from homodrift.logging import logger

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from homodrift.potentials import FastPotential, MultiscaleModel, SlowPotential

MIN_N_QUAD = 16
IDENTITY_TOLERANCE = 1e-8
K_ROUNDOFF = 1e-12


class HomogenizationResult(Immutable):
    K: float
    C_sigma: float
    C_hat_sigma: float
    A: tuple[float, ...]
    Sigma: float
    sigma: float
    fast: FastPotential

    def mu_weight(self: HomogenizationResult, y: ArrayLike) -> NDArray[np.float64]:
        """Invariant density of the fast cell process on one period."""
        return np.exp(-self.fast.value(y) / self.sigma) / self.C_sigma

    def phi_prime(self: HomogenizationResult, y: ArrayLike) -> NDArray[np.float64]:
        return eval_phi_prime(self.fast, self.sigma, y, self.C_hat_sigma)


class HomogenizedModel(Immutable):
    """Effective dynamics `dX = -A . V'(X) dt + sqrt(2 Sigma) dW`."""

    A: tuple[float, ...]
    Sigma: float
    slow: SlowPotential

    def __post_init__(self: HomogenizedModel) -> None:
        if not self.Sigma > 0:
            msg = f'Sigma must be positive, got {self.Sigma}'
            raise ConfigError(msg)


def _check_n_quad(n_quad: int) -> None:
    if n_quad < MIN_N_QUAD or n_quad % 2 != 0:
        msg = f'n_quad must be even and at least {MIN_N_QUAD}, got {n_quad}'
        raise QuadratureError(msg)


def periodic_simpson(
    integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    period: float,
    n_quad: int = DEFAULT_N_QUAD,
) -> float:
    """Composite Simpson rule with `n_quad` panels over `[0, period]`."""
    _check_n_quad(n_quad)
    grid = np.linspace(0.0, period, n_quad + 1)
    return float(simpson(integrand(grid), x=grid))


def compute_partition_constants(
    fast: FastPotential,
    sigma: float,
    n_quad: int = DEFAULT_N_QUAD,
) -> tuple[float, float]:
    """Return `(C_sigma, C_hat_sigma)`."""
    if not sigma > 0:
        msg = f'sigma must be positive, got {sigma}'
        raise QuadratureError(msg)
    c_sigma = periodic_simpson(
        lambda y: np.exp(-fast.value(y) / sigma),
        fast.period,
        n_quad,
    )
    c_hat_sigma = periodic_simpson(
        lambda y: np.exp(fast.value(y) / sigma),
        fast.period,
        n_quad,
    )
    return c_sigma, c_hat_sigma


def eval_phi_prime(
    fast: FastPotential,
    sigma: float,
    y: ArrayLike,
    c_hat_sigma: float,
) -> NDArray[np.float64]:
    """Derivative of the periodic cell corrector, `L exp(p(y)/sigma) / C_hat - 1`."""
    return fast.period * np.exp(fast.value(y) / sigma) / c_hat_sigma - 1.0


def _integral_forms_of_k(
    fast: FastPotential,
    sigma: float,
    c_sigma: float,
    c_hat_sigma: float,
    n_quad: int,
) -> tuple[float, float]:
    def mu(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.exp(-fast.value(y) / sigma) / c_sigma

    def one_plus_phi_prime(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return 1.0 + eval_phi_prime(fast, sigma, y, c_hat_sigma)

    linear = periodic_simpson(
        lambda y: one_plus_phi_prime(y) * mu(y),
        fast.period,
        n_quad,
    )
    quadratic = periodic_simpson(
        lambda y: one_plus_phi_prime(y) ** 2 * mu(y),
        fast.period,
        n_quad,
    )
    return linear, quadratic


def compute_k(
    fast: FastPotential,
    sigma: float,
    n_quad: int = DEFAULT_N_QUAD,
) -> float:
    """Effective coefficient `K` in `(0, 1]`, checked against its integral forms."""
    if fast.is_zero:
        _check_n_quad(n_quad)
        return 1.0
    c_sigma, c_hat_sigma = compute_partition_constants(fast, sigma, n_quad)
    k = fast.period**2 / (c_sigma * c_hat_sigma)
    if k > 1 + K_ROUNDOFF:
        msg = f'K={k!r} exceeds one; the partition constants are inaccurate'
        raise QuadratureError(msg)

    linear, quadratic = _integral_forms_of_k(fast, sigma, c_sigma, c_hat_sigma, n_quad)
    logger.verbose(
        'Computed homogenization coefficient',
        extra={'K': k, 'linear': linear, 'quadratic': quadratic, 'n_quad': n_quad},
    )
    if abs(linear - k) > IDENTITY_TOLERANCE or abs(quadratic - k) > IDENTITY_TOLERANCE:
        msg = (
            f'closed form K={k!r} disagrees with its integral forms '
            f'({linear!r}, {quadratic!r}); increase n_quad'
        )
        raise QuadratureError(msg)
    # k <= 1 + K_ROUNDOFF here
    return min(k, 1.0)


def homogenize_model(
    model: MultiscaleModel,
    n_quad: int = DEFAULT_N_QUAD,
) -> tuple[HomogenizedModel, HomogenizationResult]:
    if model.fast.is_zero:
        _check_n_quad(n_quad)
        c_sigma = c_hat_sigma = model.fast.period
        k = 1.0
    else:
        c_sigma, c_hat_sigma = compute_partition_constants(
            model.fast,
            model.sigma,
            n_quad,
        )
        k = compute_k(model.fast, model.sigma, n_quad)
    result = HomogenizationResult(
        K=k,
        C_sigma=c_sigma,
        C_hat_sigma=c_hat_sigma,
        A=tuple(k * alpha for alpha in model.alpha),
        Sigma=k * model.sigma,
        sigma=model.sigma,
        fast=model.fast,
    )
    logger.info(
        'Homogenized the multiscale model',
        extra={'K': k, 'A': result.A, 'Sigma': result.Sigma},
    )
    return (
        HomogenizedModel(A=result.A, Sigma=result.Sigma, slow=model.slow),
        result,
    )
