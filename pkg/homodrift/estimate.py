"""Eigenfunction martingale estimators of the homogenized drift.

For observations `x_0, ..., x_N` spaced by `delta` the score is

    G(a) = 1/delta sum_n sum_j beta_j(w_n) (phi_j(x_{n+1}) - e_j phi_j(x_n)),
    e_j = exp(-lambda_j delta),

where `(lambda_j, phi_j)` are the eigenpairs of the generator at `a`,
`w_n = x_n`, or the filtered value `z_n` for the filtered estimator, and the
estimate is a root of `G`. Closed forms are provided for the Ornstein-Uhlenbeck
case, the discrete maximum likelihood comparators and the interacting particles.
"""

from __future__ import annotations

import math
import re
from enum import StrEnum, auto
from typing import TYPE_CHECKING

import numpy as np
import scipy.optimize
from immutable import Immutable
from numpy.polynomial import Polynomial

from homodrift.constants import (
    DEFAULT_H_TARGET,
    DEFAULT_MAX_ITER,
    DEFAULT_N_QUAD_PER_ELEM,
    DEFAULT_R_FLOOR,
    DEFAULT_REL_STEP,
    DEFAULT_STEP_TOL,
    DEFAULT_TOL_SCORE,
)
from homodrift.exceptions import (
    ConfigError,
    EstimatorUndefinedError,
    HomodriftError,
    InadmissibleParameterError,
    SpectralError,
)
from homodrift.logging import logger
from homodrift.potentials import SlowKind, SlowPotential
from homodrift.spectral import (
    Eigenbasis,
    Mesh,
    assemble,
    build_mesh,
    ou_eigen_analytic,
    solve_eigenpairs,
)

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from homodrift.simulate import ObservationSet

ARMIJO = 1e-4
MIN_DAMPING = 2.0**-20
START_PERTURBATIONS = (0.25, -0.25, 0.5)


class BetaKind(StrEnum):
    IDENTITY = auto()
    MONOMIAL = auto()
    LIST = auto()
    CUSTOM = auto()


_TERM = re.compile(
    r'^\s*(?P<coefficient>[-+]?\d*\.?\d+(?:e[-+]?\d+)?)?\s*\*?\s*'
    r'(?P<variable>[xz](?:\s*\^\s*(?P<power>\d+))?)?\s*$',
)


def _parse_monomial(text: str) -> Polynomial:
    match = _TERM.match(text.strip())
    if match is None or (match['coefficient'] is None and match['variable'] is None):
        msg = f'cannot parse beta component {text!r}, expected e.g. 2*x^3'
        raise ConfigError(msg)
    coefficient = float(match['coefficient']) if match['coefficient'] else 1.0
    if match['variable'] is None:
        return Polynomial([coefficient])
    power = int(match['power']) if match['power'] else 1
    return Polynomial([0.0] * power + [coefficient])


class BetaFamily(Immutable):
    """Polynomial maps `beta_j: R -> R^m`, one shared by every `j` or one per `j`."""

    kind: BetaKind
    maps: tuple[tuple[Polynomial, ...], ...]
    J: int

    def __post_init__(self: BetaFamily) -> None:
        if self.J < 1:
            msg = f'J must be at least 1, got {self.J}'
            raise ConfigError(msg)
        if len(self.maps) not in (1, self.J):
            msg = f'beta has {len(self.maps)} maps, expected 1 or J={self.J}'
            raise ConfigError(msg)
        if not self.maps[0] or any(len(item) != self.m for item in self.maps):
            msg = 'beta maps need the same, nonzero number of components'
            raise ConfigError(msg)

    @property
    def m(self: BetaFamily) -> int:
        return len(self.maps[0])

    @property
    def shared(self: BetaFamily) -> bool:
        return len(self.maps) == 1

    def evaluate(self: BetaFamily, z: ArrayLike, j: int = 1) -> NDArray[np.float64]:
        """Values of `beta_j` with shape `(m, *z.shape)`."""
        points = np.asarray(z, dtype=float)
        components = self.maps[0] if self.shared else self.maps[j - 1]
        return np.stack([component(points) for component in components])

    def scaled(self: BetaFamily, factor: float) -> BetaFamily:
        return BetaFamily(
            kind=BetaKind.CUSTOM,
            maps=tuple(
                tuple(factor * component for component in item) for item in self.maps
            ),
            J=self.J,
        )

    @classmethod
    def from_spec(cls: type[BetaFamily], spec: str, m: int, J: int) -> BetaFamily:
        """Parse `identity`, `mono:k`, `list:x^3,x` or `poly:[c0,...];poly:[...]`.

        `|` separates one map per eigenpair, `list:x^3,x|list:x,1` for `J = 2`.
        """
        entries = spec.strip().strip('"\'').split('|')
        parts = [_parse_beta_map(entry, m) for entry in entries]
        if len(parts) == 1:
            kind, components = parts[0]
            return cls(kind=kind, maps=(components,), J=J)
        if len(parts) != J:
            msg = f'beta lists {len(parts)} maps for J={J} eigenpairs'
            raise ConfigError(msg)
        return cls(
            kind=BetaKind.CUSTOM,
            maps=tuple(components for _, components in parts),
            J=J,
        )


def _parse_beta_map(spec: str, m: int) -> tuple[BetaKind, tuple[Polynomial, ...]]:
    spec = spec.strip().strip('"\'')
    if spec == 'identity':
        components = tuple(Polynomial([0.0, 1.0]) for _ in range(m))
        kind = BetaKind.IDENTITY
    elif spec.startswith('mono:'):
        try:
            power = int(spec.removeprefix('mono:'))
        except ValueError as exception:
            msg = f'invalid monomial power in {spec!r}'
            raise ConfigError(msg) from exception
        if power < 0:
            msg = f'monomial power must be nonnegative, got {power}'
            raise ConfigError(msg)
        components = tuple(Polynomial([0.0] * power + [1.0]) for _ in range(m))
        kind = BetaKind.MONOMIAL
    elif spec.startswith('list:'):
        entries = spec.removeprefix('list:').strip('"\'').split(',')
        components = tuple(_parse_monomial(entry) for entry in entries)
        kind = BetaKind.LIST
    elif spec.startswith('poly:'):
        components = tuple(
            Polynomial(np.asarray(component.coefficients))
            for component in SlowPotential.from_spec(spec).components
        )
        kind = BetaKind.CUSTOM
    else:
        msg = f'unknown beta specification {spec!r}'
        raise ConfigError(msg)
    if len(components) != m:
        msg = f'beta has {len(components)} components, the drift has {m}'
        raise ConfigError(msg)
    return kind, components


class BasisKind(StrEnum):
    AUTO = auto()
    FEM = auto()
    ANALYTIC = auto()


class ScoreContext(Immutable):
    obs: ObservationSet
    J: int
    beta: BetaFamily
    Sigma: float
    slow: SlowPotential
    mesh: Mesh
    use_filter: bool = False
    basis_kind: BasisKind = BasisKind.AUTO
    n_quad_per_elem: int = DEFAULT_N_QUAD_PER_ELEM

    def __post_init__(self: ScoreContext) -> None:
        if self.use_filter and self.obs.z is None:
            msg = 'the filtered score needs filtered observations'
            raise ConfigError(msg)
        if not self.Sigma > 0:
            msg = f'Sigma must be positive, got {self.Sigma}'
            raise ConfigError(msg)
        if self.obs.x.ndim != 1:
            msg = 'the spectral score works on scalar observations'
            raise ConfigError(msg)
        if self.beta.m != self.slow.m:
            msg = f'beta has {self.beta.m} components, the potential has {self.slow.m}'
            raise ConfigError(msg)
        if not self.beta.shared and len(self.beta.maps) != self.J:
            msg = f'beta has {len(self.beta.maps)} maps, the score uses J={self.J}'
            raise ConfigError(msg)
        if self.basis_kind == BasisKind.ANALYTIC and not self.analytic_available:
            msg = 'the analytic basis needs the scalar quadratic potential'
            raise ConfigError(msg)

    @property
    def analytic_available(self: ScoreContext) -> bool:
        return self.slow.kind == SlowKind.QUADRATIC and self.slow.m == 1

    @property
    def uses_analytic_basis(self: ScoreContext) -> bool:
        return self.basis_kind == BasisKind.ANALYTIC or (
            self.basis_kind == BasisKind.AUTO and self.analytic_available
        )


class SolverOptions(Immutable):
    tol_score: float = DEFAULT_TOL_SCORE
    step_tol: float = DEFAULT_STEP_TOL
    max_iter: int = DEFAULT_MAX_ITER
    rel_step: float = DEFAULT_REL_STEP
    multi_start: bool = True


class EstimatorResult(Immutable):
    a_hat: tuple[float, ...]
    score_norm: float
    iterations: int
    converged: bool
    lambda_at_solution: tuple[float, ...]
    method: str


def make_score_context(
    obs: ObservationSet,
    J: int,
    beta: BetaFamily,
    Sigma: float,
    slow: SlowPotential,
    *,
    use_filter: bool = False,
    basis_kind: BasisKind = BasisKind.AUTO,
    h_target: float = DEFAULT_H_TARGET,
    R_floor: float = DEFAULT_R_FLOOR,
    n_quad_per_elem: int = DEFAULT_N_QUAD_PER_ELEM,
) -> ScoreContext:
    """Build the context, filtering the data if needed and meshing it once."""
    if use_filter and obs.z is None:
        obs = obs.filtered()
    return ScoreContext(
        obs=obs,
        J=J,
        beta=beta,
        Sigma=Sigma,
        slow=slow,
        mesh=build_mesh(obs, h_target=h_target, R_floor=R_floor),
        use_filter=use_filter,
        basis_kind=basis_kind,
        n_quad_per_elem=n_quad_per_elem,
    )


def check_admissible(ctx: ScoreContext, a: ArrayLike) -> NDArray[np.float64]:
    """Reject parameters for which `a . V` is not confining."""
    parameter = np.atleast_1d(np.asarray(a, dtype=float))
    if parameter.shape != (ctx.slow.m,) or not np.all(np.isfinite(parameter)):
        msg = f'parameter {parameter.tolist()} is not a finite {ctx.slow.m}-vector'
        raise InadmissibleParameterError(msg)
    leading = ctx.slow.leading_coefficient(parameter)
    if not leading > 0:
        msg = (
            f'parameter {parameter.tolist()} gives a nonconfining potential '
            f'(leading coefficient {leading})'
        )
        raise InadmissibleParameterError(msg)
    return parameter


def basis_at(ctx: ScoreContext, a: ArrayLike) -> Eigenbasis:
    parameter = check_admissible(ctx, a)
    if ctx.uses_analytic_basis:
        # V = x**2 / 2 makes the drift -a x
        return ou_eigen_analytic(float(parameter[0]), ctx.Sigma, ctx.J)
    matrices = assemble(ctx.mesh, parameter, ctx.Sigma, ctx.slow, ctx.n_quad_per_elem)
    return solve_eigenpairs(matrices, ctx.J)


def score_g(
    x: ArrayLike,
    y: ArrayLike,
    z: ArrayLike,
    basis: Eigenbasis,
    beta: BetaFamily,
    j: int,
    delta: float,
) -> NDArray[np.float64]:
    """`beta_j(z) (phi_j(y) - exp(-lambda_j delta) phi_j(x))`."""
    decay = math.exp(-basis.lambdas[j - 1] * delta)
    bracket = basis.evaluate(j, y) - decay * basis.evaluate(j, x)
    return beta.evaluate(z, j) * bracket


def martingale_increments(
    ctx: ScoreContext,
    a: ArrayLike,
    basis: Eigenbasis | None = None,
) -> NDArray[np.float64]:
    """Per-transition summands of the score, shape `(N, m)`."""
    basis = basis_at(ctx, a) if basis is None else basis
    delta = ctx.obs.delta
    before, after = ctx.obs.x[:-1], ctx.obs.x[1:]
    weights_at = ctx.obs.z[:-1] if ctx.use_filter and ctx.obs.z is not None else before
    brackets = [
        basis.evaluate(j, after)
        - math.exp(-basis.lambdas[j - 1] * delta) * basis.evaluate(j, before)
        for j in range(1, ctx.J + 1)
    ]
    if ctx.beta.shared:
        return (ctx.beta.evaluate(weights_at) * sum(brackets)).T / delta
    summands = sum(
        ctx.beta.evaluate(weights_at, j) * bracket
        for j, bracket in enumerate(brackets, start=1)
    )
    return summands.T / delta


def score_G(ctx: ScoreContext, a: ArrayLike) -> NDArray[np.float64]:  # noqa: N802
    return martingale_increments(ctx, a).sum(axis=0)


def _normalized(ctx: ScoreContext, score: NDArray[np.float64]) -> float:
    return float(np.linalg.norm(score)) / ctx.obs.n


def jacobian_fd(
    ctx: ScoreContext,
    a: ArrayLike,
    rel_step: float = DEFAULT_REL_STEP,
) -> NDArray[np.float64]:
    """Central differences of the score, column `k` is the derivative in `a_k`."""
    parameter = np.atleast_1d(np.asarray(a, dtype=float))
    columns = []
    for k in range(parameter.size):
        step = rel_step * max(abs(parameter[k]), 1.0)
        forward, backward = parameter.copy(), parameter.copy()
        forward[k] += step
        backward[k] -= step
        columns.append((score_G(ctx, forward) - score_G(ctx, backward)) / (2 * step))
    return np.column_stack(columns)


class _Attempt(Immutable):
    a: tuple[float, ...]
    score_norm: float
    iterations: int
    converged: bool
    method: str


def _safe_norm(ctx: ScoreContext, a: NDArray[np.float64]) -> float:
    try:
        return _normalized(ctx, score_G(ctx, a))
    except (InadmissibleParameterError, SpectralError):
        return math.inf


def _polish(
    ctx: ScoreContext,
    a: NDArray[np.float64],
    score: NDArray[np.float64],
    options: SolverOptions,
) -> tuple[NDArray[np.float64], float]:
    norm = _normalized(ctx, score)
    try:
        candidate = a - np.linalg.solve(jacobian_fd(ctx, a, options.rel_step), score)
    except (np.linalg.LinAlgError, HomodriftError):
        return a, norm
    candidate_norm = _safe_norm(ctx, candidate)
    if candidate_norm <= norm:
        return candidate, candidate_norm
    return a, norm


def _newton(
    ctx: ScoreContext,
    a0: NDArray[np.float64],
    options: SolverOptions,
) -> _Attempt:
    a = a0.copy()
    score = score_G(ctx, a)
    norm = _normalized(ctx, score)
    iterations = 0
    while iterations < options.max_iter:
        if norm <= options.tol_score:
            a, norm = _polish(ctx, a, score, options)
            return _Attempt(
                a=tuple(a.tolist()),
                score_norm=norm,
                iterations=iterations,
                converged=True,
                method='newton',
            )
        iterations += 1
        jacobian = jacobian_fd(ctx, a, options.rel_step)
        if not np.all(np.isfinite(jacobian)) or np.linalg.cond(jacobian) > 1 / np.finfo(
            float,
        ).eps:
            logger.debug('Singular score Jacobian', extra={'a': a.tolist()})
            break
        direction = -np.linalg.solve(jacobian, score)
        damping = 1.0
        while damping >= MIN_DAMPING:
            candidate = a + damping * direction
            try:
                candidate_score = score_G(ctx, candidate)
            except (InadmissibleParameterError, SpectralError):
                damping /= 2
                continue
            candidate_norm = _normalized(ctx, candidate_score)
            if candidate_norm <= (1 - ARMIJO * damping) * norm:
                break
            damping /= 2
        else:
            logger.debug('Newton line search stalled', extra={'a': a.tolist()})
            break
        a, score, norm = candidate, candidate_score, candidate_norm
        if np.linalg.norm(damping * direction) < options.step_tol:
            break
    return _Attempt(
        a=tuple(a.tolist()),
        score_norm=norm,
        iterations=iterations,
        converged=norm <= options.tol_score,
        method='newton',
    )


def _minimize(
    ctx: ScoreContext,
    a0: NDArray[np.float64],
    options: SolverOptions,
) -> _Attempt:
    def objective(parameter: NDArray[np.float64]) -> float:
        return _safe_norm(ctx, parameter) ** 2

    outcome = scipy.optimize.minimize(
        objective,
        a0,
        method='Nelder-Mead',
        options={
            'xatol': options.step_tol,
            'fatol': (options.tol_score**2) * 1e-4,
            'maxiter': options.max_iter * 20 * a0.size,
        },
    )
    a = np.atleast_1d(outcome.x)
    norm = _safe_norm(ctx, a)
    return _Attempt(
        a=tuple(a.tolist()),
        score_norm=norm,
        iterations=int(outcome.nit),
        converged=norm <= options.tol_score,
        method='minimize',
    )


def _attempt(
    ctx: ScoreContext,
    a0: NDArray[np.float64],
    options: SolverOptions,
) -> _Attempt:
    newton = _newton(ctx, a0, options)
    if newton.converged:
        return newton
    logger.info(
        'Newton did not converge, minimizing the score norm',
        extra={'a': newton.a, 'score_norm': newton.score_norm},
    )
    start = np.asarray(newton.a) if math.isfinite(newton.score_norm) else a0
    fallback = _minimize(ctx, start, options)
    best = min((newton, fallback), key=lambda attempt: attempt.score_norm)
    return _Attempt(
        a=best.a,
        score_norm=best.score_norm,
        iterations=newton.iterations + fallback.iterations,
        converged=best.converged,
        method=best.method,
    )


def solve_estimator(
    ctx: ScoreContext,
    a0: ArrayLike | None = None,
    options: SolverOptions | None = None,
) -> EstimatorResult:
    """Root of the score by damped Newton, falling back to norm minimization."""
    options = SolverOptions() if options is None else options
    start = check_admissible(ctx, np.ones(ctx.slow.m) if a0 is None else a0)

    best = _attempt(ctx, start, options)
    if not best.converged and options.multi_start:
        for perturbation in START_PERTURBATIONS:
            try:
                restart = check_admissible(ctx, start * (1 + perturbation))
            except InadmissibleParameterError:
                continue
            attempt = _attempt(ctx, restart, options)
            if attempt.score_norm < best.score_norm:
                best = attempt
            if best.converged:
                break

    lambdas = basis_at(ctx, best.a).lambdas if math.isfinite(best.score_norm) else ()
    result = EstimatorResult(
        a_hat=best.a,
        score_norm=best.score_norm,
        iterations=best.iterations,
        converged=best.converged,
        lambda_at_solution=tuple(lambdas),
        method=best.method,
    )
    logger.debug(
        'Solved estimating equation',
        extra={
            'a_hat': result.a_hat,
            'score_norm': result.score_norm,
            'iterations': result.iterations,
            'converged': result.converged,
            'method': result.method,
            'filtered': ctx.use_filter,
        },
    )
    return result


def _scalar_series(obs: ObservationSet) -> NDArray[np.float64]:
    if obs.x.ndim != 1:
        msg = 'closed-form estimators work on scalar observations'
        raise ConfigError(msg)
    if obs.n < 1:
        msg = 'at least one transition is needed'
        raise EstimatorUndefinedError(msg)
    return obs.x


def _filtered_series(obs: ObservationSet) -> NDArray[np.float64]:
    filtered = obs if obs.z is not None else obs.filtered()
    return filtered.z  # type: ignore[return-value]


def _log_estimator(numerator: float, denominator: float, delta: float) -> float:
    if denominator == 0 or not math.isfinite(numerator / denominator):
        msg = 'estimator undefined for this sample (vanishing denominator)'
        raise EstimatorUndefinedError(msg)
    ratio = numerator / denominator
    if not ratio > 0:
        msg = f'estimator undefined for this sample (log argument {ratio})'
        raise EstimatorUndefinedError(msg)
    return -math.log(ratio) / delta


def ou_closed_form_hat(obs: ObservationSet) -> float:
    """`-(1/delta) log(sum x_n x_{n+1} / sum x_n**2)`."""
    x = _scalar_series(obs)
    return _log_estimator(float(x[:-1] @ x[1:]), float(x[:-1] @ x[:-1]), obs.delta)


def ou_closed_form_tilde(obs: ObservationSet) -> float:
    """`-(1/delta) log(sum z_n x_{n+1} / sum z_n x_n)`."""
    x = _scalar_series(obs)
    z = _filtered_series(obs)
    return _log_estimator(float(z[:-1] @ x[1:]), float(z[:-1] @ x[:-1]), obs.delta)


def _ratio_estimator(numerator: float, denominator: float, delta: float) -> float:
    if denominator == 0:
        msg = 'estimator undefined for this sample (vanishing denominator)'
        raise EstimatorUndefinedError(msg)
    return -numerator / (delta * denominator)


def mle_hat(obs: ObservationSet) -> float:
    """Discrete maximum likelihood drift of the Ornstein-Uhlenbeck model."""
    x = _scalar_series(obs)
    numerator, denominator = x[:-1] @ np.diff(x), x[:-1] @ x[:-1]
    return _ratio_estimator(float(numerator), float(denominator), obs.delta)


def mle_tilde(obs: ObservationSet) -> float:
    x = _scalar_series(obs)
    z = _filtered_series(obs)
    numerator, denominator = z[:-1] @ np.diff(x), z[:-1] @ x[:-1]
    return _ratio_estimator(float(numerator), float(denominator), obs.delta)


def particles_closed_form(obs: ObservationSet, *, filtered: bool = False) -> float:
    """Ornstein-Uhlenbeck closed forms on the sum of the particle coordinates.

    The sum is the first eigenfunction of the homogenized particle generator,
    with eigenvalue `A`.
    """
    if obs.x.ndim != 2 or obs.x.shape[1] < 2:  # noqa: PLR2004
        msg = 'particle observations need at least two coordinates'
        raise ConfigError(msg)
    summed = obs.summed()
    if filtered:
        return ou_closed_form_tilde(summed)
    return ou_closed_form_hat(summed)
