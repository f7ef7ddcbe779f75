"""Slow confining potentials, fast periodic potentials and the two-scale model."""

from __future__ import annotations

import json
import math
from enum import StrEnum, auto
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
from immutable import Immutable
from numpy.polynomial import Polynomial

from homodrift.exceptions import ConfigError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


class SlowKind(StrEnum):
    """Built-in slow-scale potential families."""

    QUADRATIC = auto()
    QUARTIC = auto()
    SEXTIC = auto()
    BISTABLE = auto()
    CUSTOM = auto()


class FastKind(StrEnum):
    """Built-in periodic fast-scale potentials."""

    COS = auto()
    ZERO = auto()


class PolynomialComponent(Immutable):
    """One scalar component of the slow potential with its analytic derivatives."""

    value: Polynomial
    first: Polynomial
    second: Polynomial

    @classmethod
    def from_coefficients(
        cls: type[PolynomialComponent],
        coefficients: Sequence[float],
    ) -> PolynomialComponent:
        """Build a component from ascending power coefficients."""
        if len(coefficients) == 0:
            msg = 'a polynomial component needs at least one coefficient'
            raise ConfigError(msg)
        array = np.asarray(coefficients, dtype=float)
        if not np.all(np.isfinite(array)):
            msg = f'polynomial coefficients must be finite, got {list(coefficients)}'
            raise ConfigError(msg)
        value = Polynomial(array)
        first = value.deriv()
        return cls(value=value, first=first, second=first.deriv())

    @property
    def coefficients(self: PolynomialComponent) -> tuple[float, ...]:
        return tuple(float(c) for c in self.value.coef)


_MONOMIALS = {
    SlowKind.QUADRATIC: (0.0, 0.0, 0.5),
    SlowKind.QUARTIC: (0.0, 0.0, 0.0, 0.0, 0.25),
    SlowKind.SEXTIC: (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 6.0),
}


class SlowPotential(Immutable):
    """Vector of slow potentials `V = (V_1, ..., V_m)`, each a polynomial."""

    kind: SlowKind
    components: tuple[PolynomialComponent, ...]

    def __post_init__(self: SlowPotential) -> None:
        if len(self.components) < 1:
            msg = 'a slow potential needs at least one component'
            raise ConfigError(msg)

    @property
    def m(self: SlowPotential) -> int:
        return len(self.components)

    def value(self: SlowPotential, x: ArrayLike) -> NDArray[np.float64]:
        """Evaluate all the components, result has shape `(m, *x.shape)`."""
        x = np.asarray(x)
        return np.stack([component.value(x) for component in self.components])

    def first(self: SlowPotential, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x)
        return np.stack([component.first(x) for component in self.components])

    def second(self: SlowPotential, x: ArrayLike) -> NDArray[np.float64]:
        return np.stack(
            [component.second(np.asarray(x)) for component in self.components],
        )

    def combined(self: SlowPotential, a: ArrayLike) -> Polynomial:
        """Return the scalar polynomial `a . V`."""
        weights = np.atleast_1d(np.asarray(a, dtype=float))
        if weights.shape != (self.m,):
            msg = f'parameter has {weights.size} components, potential has {self.m}'
            raise ConfigError(msg)
        total = Polynomial([0.0])
        for weight, component in zip(weights, self.components, strict=True):
            total = total + weight * component.value
        return total

    def leading_coefficient(self: SlowPotential, a: ArrayLike) -> float:
        """Leading nonzero coefficient of `a . V`, zero when `a . V` is constant."""
        coefficients = self.combined(a).coef[1:]
        nonzero = np.flatnonzero(np.abs(coefficients) > 0)
        if nonzero.size == 0:
            return 0.0
        return float(coefficients[nonzero[-1]])

    @classmethod
    def from_kind(cls: type[SlowPotential], kind: SlowKind | str) -> SlowPotential:
        kind = SlowKind(kind)
        if kind == SlowKind.BISTABLE:
            return cls(
                kind=kind,
                components=(
                    PolynomialComponent.from_coefficients(_MONOMIALS[SlowKind.QUARTIC]),
                    PolynomialComponent.from_coefficients((0.0, 0.0, -0.5)),
                ),
            )
        if kind == SlowKind.CUSTOM:
            msg = 'custom potentials are built from coefficient lists'
            raise ConfigError(msg)
        return cls(
            kind=kind,
            components=(PolynomialComponent.from_coefficients(_MONOMIALS[kind]),),
        )

    @classmethod
    def from_spec(cls: type[SlowPotential], spec: str) -> SlowPotential:
        """Parse `quadratic`, `bistable`, `poly:[c0,c1,...]` or `;`-joined lists.

        A list of several entries yields one component per entry, in order, and
        `bistable` contributes its two components.
        """
        entries = [entry.strip() for entry in spec.split(';') if entry.strip()]
        if not entries:
            msg = f'empty slow potential specification {spec!r}'
            raise ConfigError(msg)
        if len(entries) == 1 and not entries[0].startswith('poly:'):
            try:
                return cls.from_kind(entries[0])
            except ValueError as exception:
                msg = f'unknown slow potential {entries[0]!r}'
                raise ConfigError(msg) from exception

        components: list[PolynomialComponent] = []
        for entry in entries:
            if entry.startswith('poly:'):
                try:
                    coefficients = json.loads(entry.removeprefix('poly:'))
                except json.JSONDecodeError as exception:
                    msg = f'cannot parse polynomial coefficients in {entry!r}'
                    raise ConfigError(msg) from exception
                if not isinstance(coefficients, list):
                    msg = f'polynomial coefficients must be a list in {entry!r}'
                    raise ConfigError(msg)
                components.append(PolynomialComponent.from_coefficients(coefficients))
            else:
                try:
                    components.extend(cls.from_kind(entry).components)
                except ValueError as exception:
                    msg = f'unknown slow potential {entry!r}'
                    raise ConfigError(msg) from exception
        return cls(kind=SlowKind.CUSTOM, components=tuple(components))

    def to_spec(self: SlowPotential) -> str:
        if self.kind != SlowKind.CUSTOM:
            return str(self.kind)
        return ';'.join(
            'poly:' + json.dumps(list(component.coefficients))
            for component in self.components
        )


class FastPotential(Immutable):
    """Periodic fast potential `p` with period `L`."""

    kind: FastKind
    period: float = 2 * math.pi

    def __post_init__(self: FastPotential) -> None:
        if not self.period > 0:
            msg = f'fast potential period must be positive, got {self.period}'
            raise ConfigError(msg)

    @property
    def is_zero(self: FastPotential) -> bool:
        return self.kind == FastKind.ZERO

    @property
    def sup_bound(self: FastPotential) -> float:
        return 0.0 if self.is_zero else 1.0

    @property
    def frequency(self: FastPotential) -> float:
        return 2 * math.pi / self.period

    def value(self: FastPotential, y: ArrayLike) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.zeros_like(y)
        return np.cos(self.frequency * y)

    def first(self: FastPotential, y: ArrayLike) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.zeros_like(y)
        return -self.frequency * np.sin(self.frequency * y)

    def scalar_first(self: FastPotential) -> Callable[[float], float]:
        """Plain-float `p'` for the time stepping loops."""
        if self.is_zero:
            return lambda _: 0.0
        frequency = self.frequency
        sin = math.sin
        return lambda y: -frequency * sin(frequency * y)

    @classmethod
    def from_spec(
        cls: type[FastPotential],
        spec: str,
        period: float | None = None,
    ) -> FastPotential:
        try:
            kind = FastKind(spec.strip())
        except ValueError as exception:
            msg = f'unknown fast potential {spec!r}'
            raise ConfigError(msg) from exception
        return cls(kind=kind, period=2 * math.pi if period is None else period)


class MultiscaleModel(Immutable):
    """Two-scale overdamped Langevin dynamics.

    dX = -alpha . V'(X) dt - (1/epsilon) p'(X/epsilon) dt + sqrt(2 sigma) dW
    """

    alpha: tuple[float, ...]
    sigma: float
    epsilon: float
    slow: SlowPotential
    fast: FastPotential

    def __post_init__(self: MultiscaleModel) -> None:
        if not self.sigma > 0:
            msg = f'sigma must be positive, got {self.sigma}'
            raise ConfigError(msg)
        if not self.epsilon > 0:
            msg = f'epsilon must be positive, got {self.epsilon}'
            raise ConfigError(msg)
        if len(self.alpha) != self.slow.m:
            msg = (
                f'alpha has {len(self.alpha)} components but the slow potential '
                f'has {self.slow.m}'
            )
            raise ConfigError(msg)


def eval_drift_slow(model: MultiscaleModel, x: ArrayLike) -> NDArray[np.float64]:
    """Return `-alpha . V'(x)`."""
    return -np.tensordot(np.asarray(model.alpha), model.slow.first(x), axes=1)


def eval_drift_fast(model: MultiscaleModel, x: ArrayLike) -> NDArray[np.float64]:
    """Return `-(1/epsilon) p'(x/epsilon)`."""
    return -model.fast.first(np.asarray(x, dtype=float) / model.epsilon) / model.epsilon


class ParticleModel(Immutable):
    """`d` particles in `alpha x**2/2 + p(x/epsilon)`, mean-field attraction `theta`."""

    alpha: float
    theta: float
    sigma: float
    epsilon: float
    fast: FastPotential
    d: int = 2

    def __post_init__(self: ParticleModel) -> None:
        if self.d < 2:  # noqa: PLR2004
            msg = f'the particle system needs at least two particles, got {self.d}'
            raise ConfigError(msg)
        if not self.sigma > 0:
            msg = f'sigma must be positive, got {self.sigma}'
            raise ConfigError(msg)
        if not self.epsilon > 0:
            msg = f'epsilon must be positive, got {self.epsilon}'
            raise ConfigError(msg)
