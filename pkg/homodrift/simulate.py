"""Euler-Maruyama paths of the multiscale, homogenized and particle dynamics.

Randomness comes from a counter-based `Philox` generator. Every path consumes
its standard normals in blocks of `CHUNK` steps, in step order (and coordinate
order for vector states), so a path is a pure function of its seed, fine step
and horizon, whatever is stored or subsampled on the way.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Callable, Literal

import numpy as np
from immutable import Immutable

from homodrift.exceptions import SimulationError
from homodrift.logging import logger
from homodrift.potentials import MultiscaleModel, ParticleModel

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from homodrift.homogenize import HomogenizedModel
    from homodrift.potentials import FastPotential

CHUNK = 1 << 16
BLOW_UP = 1e150
COMMENSURABILITY_TOLERANCE = 1e-9

FineStepRule = Literal['eps3', 'min']


class Trajectory(Immutable):
    """States stored every `step` time units, integrated with `fine_step`."""

    values: NDArray[np.float64]
    step: float
    fine_step: float
    seed: int
    t0: float = 0.0

    @property
    def horizon(self: Trajectory) -> float:
        return (len(self.values) - 1) * self.step


class ObservationSet(Immutable):
    """Observations `x_n = X(n delta)` and, optionally, their filtered values.

    `seed` is the seed of the simulated path, `None` for external data.
    """

    x: NDArray[np.float64]
    delta: float
    z: NDArray[np.float64] | None = None
    seed: int | None = None

    def __post_init__(self: ObservationSet) -> None:
        if not self.delta > 0:
            msg = f'delta must be positive, got {self.delta}'
            raise SimulationError(msg)
        if self.z is not None:
            if self.z.shape != self.x.shape:
                msg = (
                    f'filtered values have shape {self.z.shape}, '
                    f'observations {self.x.shape}'
                )
                raise SimulationError(msg)
            if np.any(self.z[0] != 0):
                msg = 'filtered values must start at zero'
                raise SimulationError(msg)

    @property
    def n(self: ObservationSet) -> int:
        """Number of transitions `N`."""
        return len(self.x) - 1

    @property
    def dimension(self: ObservationSet) -> int:
        return 1 if self.x.ndim == 1 else self.x.shape[1]

    def filtered(self: ObservationSet) -> ObservationSet:
        """Return a copy carrying the exponentially filtered values."""
        from homodrift.filterbank import filter_recurrent

        z = filter_recurrent(self.x, self.delta)
        return ObservationSet(x=self.x, delta=self.delta, z=z, seed=self.seed)

    def prefix(self: ObservationSet, n: int) -> ObservationSet:
        """First `n` transitions; the filter is causal so `z` is truncated too."""
        if not 1 <= n <= self.n:
            msg = f'prefix length must be in [1, {self.n}], got {n}'
            raise SimulationError(msg)
        return ObservationSet(
            x=self.x[: n + 1],
            delta=self.delta,
            z=None if self.z is None else self.z[: n + 1],
            seed=self.seed,
        )

    def summed(self: ObservationSet) -> ObservationSet:
        """Collapse vector observations to the sum of their coordinates."""
        if self.x.ndim == 1:
            return self
        return ObservationSet(
            x=self.x.sum(axis=1),
            delta=self.delta,
            z=None if self.z is None else self.z.sum(axis=1),
            seed=self.seed,
        )


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master_seed: int, *indices: int) -> int:
    """Independent 64-bit seed for the substream `(master_seed, *indices)`."""
    sequence = np.random.SeedSequence(master_seed, spawn_key=tuple(indices))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def default_fine_step(
    epsilon: float,
    delta: float | None = None,
    rule: FineStepRule = 'eps3',
) -> float:
    """`h = epsilon**3`, or `min(epsilon**3, delta / 100)` with the `min` rule.

    With the `min` rule the result is snapped down so that `delta / h` is an
    integer.
    """
    h = epsilon**3
    if rule == 'min' and delta is not None:
        h = min(h, delta / 100)
    if delta is not None:
        h = delta / math.ceil(delta / h - COMMENSURABILITY_TOLERANCE)
    return h


def _step_count(horizon: float, h: float) -> int:
    if not h > 0:
        msg = f'fine step must be positive, got {h}'
        raise SimulationError(msg)
    if horizon < h:
        msg = f'horizon {horizon} is shorter than the fine step {h}'
        raise SimulationError(msg)
    return math.floor(horizon / h + COMMENSURABILITY_TOLERANCE)


def _stride(delta: float, step: float) -> int:
    ratio = delta / step
    stride = round(ratio)
    if stride < 1 or abs(ratio - stride) > COMMENSURABILITY_TOLERANCE * max(1.0, ratio):
        msg = f'delta={delta} is not an integer multiple of the step {step}'
        raise SimulationError(msg)
    return stride


def _horner(coefficients: NDArray[np.float64]) -> Callable[[float], float]:
    descending = [float(c) for c in coefficients[::-1]]

    def evaluate(x: float) -> float:
        accumulator = 0.0
        for coefficient in descending:
            accumulator = accumulator * x + coefficient
        return accumulator

    return evaluate


def _scalar_loop(
    drift: Callable[[float], float],
    x0: float,
    h: float,
    scale: float,
    n_steps: int,
    stride: int,
    normals: Callable[[int, int], NDArray[np.float64]],
) -> NDArray[np.float64]:
    stored = np.empty(n_steps // stride + 1)
    stored[0] = x = float(x0)
    step = 0
    for start in range(0, n_steps, CHUNK):
        for xi in (normals(start, min(CHUNK, n_steps - start)) * scale).tolist():
            x = x + h * drift(x) + xi
            step += 1
            if not -BLOW_UP < x < BLOW_UP:
                msg = f'nonfinite state {x!r}'
                raise SimulationError(msg, step=step)
            if step % stride == 0:
                stored[step // stride] = x
    return stored


def _vector_loop(
    drift: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    x0: NDArray[np.float64],
    h: float,
    scale: float,
    n_steps: int,
    stride: int,
    normals: Callable[[int, int], NDArray[np.float64]],
) -> NDArray[np.float64]:
    stored = np.empty((n_steps // stride + 1, x0.size))
    stored[0] = x = x0.astype(float)
    step = 0
    for start in range(0, n_steps, CHUNK):
        for xi in normals(start, min(CHUNK, n_steps - start)) * scale:
            x = x + h * drift(x) + xi
            step += 1
            if not np.all(np.abs(x) < BLOW_UP):
                msg = f'nonfinite state {x!r}'
                raise SimulationError(msg, step=step)
            if step % stride == 0:
                stored[step // stride] = x
    return stored


def euler_maruyama(
    drift: Callable,
    sigma: float,
    x0: float | ArrayLike,
    h: float,
    n_steps: int,
    *,
    seed: int | None = None,
    increments: NDArray[np.float64] | None = None,
    stride: int = 1,
) -> NDArray[np.float64]:
    """Integrate `dX = drift(X) dt + sqrt(2 sigma) dW` from `x0`.

    Standard normal increments come either from the seeded generator or, for
    pathwise comparisons, from `increments` (one row per step). Every
    `stride`-th state is stored. Scalar states use plain floats in the loop.
    """
    if sigma < 0:
        msg = f'sigma must be nonnegative, got {sigma}'
        raise SimulationError(msg)
    vector = np.ndim(x0) > 0
    dimension = np.size(x0)
    if increments is not None:
        expected = (n_steps, dimension) if vector else (n_steps,)
        if increments.shape != expected:
            msg = f'increments have shape {increments.shape}, expected {expected}'
            raise SimulationError(msg)

        def normals(start: int, size: int) -> NDArray[np.float64]:
            return increments[start : start + size]

    else:
        if seed is None:
            msg = 'either a seed or explicit increments are required'
            raise SimulationError(msg)
        generator = make_generator(seed)

        def normals(start: int, size: int) -> NDArray[np.float64]:
            _ = start
            if vector:
                return generator.standard_normal((size, dimension))
            return generator.standard_normal(size)

    scale = math.sqrt(2 * sigma * h)
    if vector:
        start = np.asarray(x0, dtype=float)
        return _vector_loop(drift, start, h, scale, n_steps, stride, normals)
    return _scalar_loop(drift, float(x0), h, scale, n_steps, stride, normals)


def _multiscale_drift(model: MultiscaleModel) -> Callable[[float], float]:
    slow = _horner(-model.slow.combined(model.alpha).deriv().coef)
    if model.fast.is_zero:
        return slow
    fast_first = model.fast.scalar_first()
    inverse_epsilon = 1 / model.epsilon

    def drift(x: float) -> float:
        return slow(x) - inverse_epsilon * fast_first(x * inverse_epsilon)

    return drift


def _check_multiscale_step(model: MultiscaleModel, h: float) -> None:
    if h > model.epsilon**2 / 10:
        logger.warning(
            'Fine step is large compared to the fast scale',
            extra={'h': h, 'epsilon': model.epsilon, 'limit': model.epsilon**2 / 10},
        )


def simulate_multiscale(
    model: MultiscaleModel,
    T: float,
    h: float | None = None,
    seed: int = 0,
    *,
    stride: int = 1,
) -> Trajectory:
    """Euler-Maruyama path of the two-scale dynamics started at zero."""
    h = default_fine_step(model.epsilon) if h is None else h
    _check_multiscale_step(model, h)
    n_steps = _step_count(T, h)
    logger.debug(
        'Simulating multiscale path',
        extra={'T': T, 'h': h, 'n_steps': n_steps, 'seed': seed, 'stride': stride},
    )
    values = euler_maruyama(
        _multiscale_drift(model),
        model.sigma,
        0.0,
        h,
        n_steps,
        seed=seed,
        stride=stride,
    )
    return Trajectory(values=values, step=h * stride, fine_step=h, seed=seed)


def simulate_homogenized(
    hmodel: HomogenizedModel,
    T: float,
    h: float,
    seed: int = 0,
    *,
    stride: int = 1,
) -> Trajectory:
    """Euler-Maruyama path of the homogenized dynamics started at zero."""
    n_steps = _step_count(T, h)
    drift = _horner(-hmodel.slow.combined(hmodel.A).deriv().coef)
    values = euler_maruyama(
        drift,
        hmodel.Sigma,
        0.0,
        h,
        n_steps,
        seed=seed,
        stride=stride,
    )
    return Trajectory(values=values, step=h * stride, fine_step=h, seed=seed)


def particles_drift(
    alpha: float,
    theta: float,
    epsilon: float,
    fast: FastPotential,
) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    """Confinement, fast oscillation and mean-field attraction of every particle."""
    inverse_epsilon = 1 / epsilon

    def drift(x: NDArray[np.float64]) -> NDArray[np.float64]:
        interaction = theta * (x - x.mean())
        if fast.is_zero:
            return -alpha * x - interaction
        oscillation = inverse_epsilon * fast.first(x * inverse_epsilon)
        return -alpha * x - oscillation - interaction

    return drift


def simulate_particles(
    alpha: float,
    theta: float,
    sigma: float,
    epsilon: float,
    fast: FastPotential,
    d: int,
    T: float,
    h: float | None = None,
    seed: int = 0,
    *,
    stride: int = 1,
    increments: NDArray[np.float64] | None = None,
) -> Trajectory:
    """Path of `d` interacting particles in the two-scale potential, started at zero."""
    if d < 2:  # noqa: PLR2004
        msg = f'the particle system needs at least two particles, got {d}'
        raise SimulationError(msg)
    if not sigma > 0:
        msg = f'sigma must be positive, got {sigma}'
        raise SimulationError(msg)
    h = default_fine_step(epsilon) if h is None else h
    n_steps = _step_count(T, h)
    values = euler_maruyama(
        particles_drift(alpha, theta, epsilon, fast),
        sigma,
        np.zeros(d),
        h,
        n_steps,
        seed=None if increments is not None else seed,
        increments=increments,
        stride=stride,
    )
    return Trajectory(values=values, step=h * stride, fine_step=h, seed=seed)


def subsample(traj: Trajectory, delta: float) -> ObservationSet:
    """Observations every `delta` time units, `N = floor(T / delta)`."""
    stride = _stride(delta, traj.step)
    if stride * traj.step > traj.horizon + COMMENSURABILITY_TOLERANCE * traj.step:
        msg = f'delta={delta} exceeds the horizon {traj.horizon}'
        raise SimulationError(msg)
    return ObservationSet(
        x=np.array(traj.values[::stride]),
        delta=delta,
        seed=traj.seed,
    )


def observation_stride(delta: float, h: float) -> int:
    """Number of fine steps between two observations, rejecting `h > delta`."""
    if h > delta:
        msg = f'fine step h={h} exceeds the observation spacing delta={delta}'
        raise SimulationError(msg)
    return _stride(delta, h)


def simulate_observations(
    model: MultiscaleModel | HomogenizedModel | ParticleModel,
    T: float,
    delta: float,
    h: float,
    seed: int = 0,
) -> ObservationSet:
    """Simulate and keep only every observation, never holding the fine path.

    Noise is consumed exactly as by the full path, so the result equals
    `subsample(simulate_*(..., h, seed), delta)`.
    """
    stride = observation_stride(delta, h)
    if isinstance(model, ParticleModel):
        traj = simulate_particles(
            model.alpha,
            model.theta,
            model.sigma,
            model.epsilon,
            model.fast,
            model.d,
            T,
            h,
            seed,
            stride=stride,
        )
    elif isinstance(model, MultiscaleModel):
        traj = simulate_multiscale(model, T, h, seed, stride=stride)
    else:
        traj = simulate_homogenized(model, T, h, seed, stride=stride)
    return ObservationSet(x=traj.values, delta=delta, seed=seed)
