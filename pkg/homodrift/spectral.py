"""Eigenpairs of the homogenized generator `Sigma u'' - a . V'(x) u'`.

The eigenproblem is solved in weighted variational form on a truncated interval
`[-R, R]` with continuous piecewise linear elements, natural boundary
conditions and element integrals by composite Simpson quadrature,

    S_ik = Sigma int psi_i' psi_k' w,    M_ik = int psi_i psi_k w,    S t = lambda M t,

where `w` is the invariant density `exp(-a . V / Sigma)`, normalized to unit
mass on the mesh. For the quadratic potential the Hermite eigensystem is also
available in closed form.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
from immutable import Immutable
from numpy.polynomial import Polynomial

from homodrift.constants import (
    DEFAULT_H_TARGET,
    DEFAULT_N_QUAD_PER_ELEM,
    DEFAULT_R_FLOOR,
)
from homodrift.exceptions import (
    ConfigError,
    InadmissibleParameterError,
    SpectralError,
)
from homodrift.logging import logger

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from homodrift.potentials import SlowPotential
    from homodrift.simulate import ObservationSet

R_MARGIN = 0.1
MESH_TOLERANCE = 1e-9
ACTIVE_MASS_RATIO = 1e-250
ZERO_EIGENVALUE_RATIO = 1e-8
RESIDUAL_TOLERANCE = 1e-8


class Mesh(Immutable):
    """Uniform partition of `[-R, R]` in `n_elems` elements."""

    R: float
    n_elems: int

    @property
    def nodes(self: Mesh) -> NDArray[np.float64]:
        return np.linspace(-self.R, self.R, self.n_elems + 1)

    @property
    def h(self: Mesh) -> float:
        return 2 * self.R / self.n_elems


class WeightedMatrices(Immutable):
    mesh: Mesh
    S: NDArray[np.float64]
    M: NDArray[np.float64]
    a: tuple[float, ...]
    Sigma: float
    slow: SlowPotential
    log_normalizer: float

    def weight(self: WeightedMatrices, x: ArrayLike) -> NDArray[np.float64]:
        """Invariant density `exp(-a . V(x) / Sigma)` with the mesh normalization."""
        exponent = -self.slow.combined(self.a)(np.asarray(x, dtype=float)) / self.Sigma
        return np.exp(exponent - self.log_normalizer)


class SpectralBasis(Immutable):
    """First `J` nonzero eigenpairs on a mesh, M-normalized, positive at `R`."""

    mesh: Mesh
    lambdas: tuple[float, ...]
    thetas: NDArray[np.float64]
    a: tuple[float, ...]
    Sigma: float

    @property
    def J(self: SpectralBasis) -> int:
        return len(self.lambdas)

    def evaluate(self: SpectralBasis, j: int, x: ArrayLike) -> NDArray[np.float64]:
        """P1 interpolation of the `j`-th eigenfunction, clamped outside `[-R, R]`."""
        if not 1 <= j <= self.J:
            msg = f'eigenfunction index must be in [1, {self.J}], got {j}'
            raise SpectralError(msg)
        points = np.asarray(x, dtype=float)
        outside = np.count_nonzero(np.abs(points) > self.mesh.R)
        if outside:
            logger.warning(
                'Clamping eigenfunction outside the mesh',
                extra={'count': outside, 'R': self.mesh.R, 'j': j},
            )
        return np.interp(points, self.mesh.nodes, self.thetas[j - 1])


class AnalyticOUBasis(Immutable):
    """Hermite eigensystem of the Ornstein-Uhlenbeck generator."""

    a: tuple[float, ...]
    Sigma: float
    lambdas: tuple[float, ...]
    polynomials: tuple[Polynomial, ...]

    @property
    def J(self: AnalyticOUBasis) -> int:
        return len(self.lambdas)

    def evaluate(self: AnalyticOUBasis, j: int, x: ArrayLike) -> NDArray[np.float64]:
        if not 1 <= j <= self.J:
            msg = f'eigenfunction index must be in [1, {self.J}], got {j}'
            raise SpectralError(msg)
        return self.polynomials[j - 1](np.asarray(x, dtype=float))


Eigenbasis = SpectralBasis | AnalyticOUBasis


def build_mesh(
    observations: ObservationSet | None = None,
    h_target: float = DEFAULT_H_TARGET,
    R_floor: float = DEFAULT_R_FLOOR,
) -> Mesh:
    """Truncate at `R = max(R_bar + 0.1, R_floor)`.

    `R_bar` is the largest observed `|x|`, or `|z|` when the data are filtered.
    """
    if not h_target > 0:
        msg = f'h_target must be positive, got {h_target}'
        raise ConfigError(msg)
    r_bar = 0.0
    if observations is not None:
        series = [observations.x] + ([] if observations.z is None else [observations.z])
        for values in series:
            if not np.all(np.isfinite(values)):
                msg = 'observations contain nonfinite values'
                raise SpectralError(msg)
            r_bar = max(r_bar, float(np.max(np.abs(values))))
    R = max(r_bar + R_MARGIN, R_floor)
    n_elems = max(2, math.ceil(2 * R / h_target - MESH_TOLERANCE))
    logger.debug('Built mesh', extra={'R': R, 'n_elems': n_elems, 'r_bar': r_bar})
    return Mesh(R=R, n_elems=n_elems)


def _simpson_rule(panels: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    points = np.linspace(0.0, 1.0, panels + 1)
    weights = np.ones(panels + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return points, weights / (3.0 * panels)


def assemble(
    mesh: Mesh,
    a: ArrayLike,
    Sigma: float,
    V: SlowPotential,
    n_quad_per_elem: int = DEFAULT_N_QUAD_PER_ELEM,
) -> WeightedMatrices:
    """Tridiagonal weighted stiffness and mass matrices of the P1 space."""
    if n_quad_per_elem < 2 or n_quad_per_elem % 2 != 0:  # noqa: PLR2004
        msg = f'n_quad_per_elem must be even and at least 2, got {n_quad_per_elem}'
        raise ConfigError(msg)
    if not Sigma > 0:
        msg = f'Sigma must be positive, got {Sigma}'
        raise ConfigError(msg)
    a = tuple(float(value) for value in np.atleast_1d(np.asarray(a, dtype=float)))
    h = mesh.h
    points, weights = _simpson_rule(n_quad_per_elem)
    x = mesh.nodes[:-1, None] + h * points[None, :]

    exponent = -V.combined(a)(x) / Sigma
    shift = float(exponent.max())
    density = np.exp(exponent - shift) * weights

    left, right = 1.0 - points, points
    mass_ll = h * density @ (left * left)
    mass_lr = h * density @ (left * right)
    mass_rr = h * density @ (right * right)
    stiffness = Sigma / h * density.sum(axis=1)

    total = float((mass_ll + 2 * mass_lr + mass_rr).sum())
    if not (np.isfinite(total) and total > 0):
        msg = 'invariant density vanishes or overflows on the mesh'
        raise SpectralError(msg)

    main_mass = np.zeros(mesh.n_elems + 1)
    main_mass[:-1] += mass_ll
    main_mass[1:] += mass_rr
    main_stiffness = np.zeros(mesh.n_elems + 1)
    main_stiffness[:-1] += stiffness
    main_stiffness[1:] += stiffness

    M = (np.diag(main_mass) + np.diag(mass_lr, 1) + np.diag(mass_lr, -1)) / total
    S = (
        np.diag(main_stiffness) - np.diag(stiffness, 1) - np.diag(stiffness, -1)
    ) / total
    return WeightedMatrices(
        mesh=mesh,
        S=S,
        M=M,
        a=a,
        Sigma=Sigma,
        slow=V,
        log_normalizer=shift + math.log(total),
    )


def solve_eigenpairs(W: WeightedMatrices, J: int) -> SpectralBasis:
    """Smallest `J` eigenpairs above the zero eigenvalue of the constants."""
    if J < 1 or J + 1 > W.mesh.n_elems:
        msg = f'J must be in [1, {W.mesh.n_elems - 1}], got {J}'
        raise SpectralError(msg)
    # nodes whose weight underflows carry no mass and are dropped, the
    # eigenvectors are extended by their edge values there
    mass = np.diag(W.M)
    active = np.flatnonzero(mass > ACTIVE_MASS_RATIO * mass.max())
    lo, hi = int(active[0]), int(active[-1]) + 1
    if hi - lo < J + 1:
        msg = f'only {hi - lo} nodes carry mass, {J + 1} are needed'
        raise SpectralError(msg)
    if hi - lo < len(mass):
        logger.debug(
            'Dropping massless nodes',
            extra={'kept': [lo, hi], 'n_nodes': len(mass)},
        )
    S, M = W.S[lo:hi, lo:hi], W.M[lo:hi, lo:hi]

    # symmetric Jacobi scaling, undone on the eigenvectors
    scale = 1.0 / np.sqrt(np.diag(M))
    scaled_S = S * scale[:, None] * scale[None, :]
    scaled_M = M * scale[:, None] * scale[None, :]
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(scaled_S, scaled_M)
    except (np.linalg.LinAlgError, ValueError) as exception:
        msg = 'generalized eigensolver failed'
        raise SpectralError(msg) from exception
    eigenvectors = eigenvectors * scale[:, None]

    threshold = ZERO_EIGENVALUE_RATIO * float(eigenvalues[-1])
    selected = np.flatnonzero(eigenvalues > threshold)[:J]
    if selected.size < J:
        msg = f'only {selected.size} eigenvalues exceed the zero threshold {threshold}'
        raise SpectralError(msg)

    lambdas = eigenvalues[selected]
    if np.any(np.diff(lambdas) <= 0):
        msg = f'eigenvalues are not simple: {lambdas.tolist()}'
        raise SpectralError(msg)

    thetas = np.empty((J, W.mesh.n_elems + 1))
    for row, index in enumerate(selected):
        theta = eigenvectors[:, index]
        theta = theta / math.sqrt(float(theta @ M @ theta))
        if theta[-1] < 0:
            theta = -theta
        mass_theta = M @ theta
        residual = float(np.linalg.norm(S @ theta - eigenvalues[index] * mass_theta))
        if residual > RESIDUAL_TOLERANCE * float(np.linalg.norm(mass_theta)):
            msg = f'eigenpair {row + 1} has residual {residual}'
            raise SpectralError(msg)
        thetas[row] = np.pad(theta, (lo, len(mass) - hi), mode='edge')

    logger.verbose(
        'Solved generator eigenproblem',
        extra={'a': W.a, 'lambdas': lambdas.tolist(), 'n_elems': W.mesh.n_elems},
    )
    return SpectralBasis(
        mesh=W.mesh,
        lambdas=tuple(float(value) for value in lambdas),
        thetas=thetas,
        a=W.a,
        Sigma=W.Sigma,
    )


def eval_eigenfunction(basis: Eigenbasis, j: int, x: ArrayLike) -> NDArray[np.float64]:
    return basis.evaluate(j, x)


def ou_eigen_analytic(a: float, Sigma: float, J: int) -> AnalyticOUBasis:
    """Hermite eigenfunctions with `lambda_j = j a`, normalized like the P1 basis.

    The monic recursion `phi_{j+1} = x phi_j - j v phi_{j-1}`, `v = Sigma / a`, is
    scaled by `1 / sqrt(j! v**j)` to unit norm under the invariant density.
    """
    if not a > 0:
        msg = f'the Ornstein-Uhlenbeck generator needs a > 0, got {a}'
        raise InadmissibleParameterError(msg)
    if J < 1:
        msg = f'J must be at least 1, got {J}'
        raise SpectralError(msg)
    variance = Sigma / a
    x = Polynomial([0.0, 1.0])
    polynomials = [Polynomial([1.0]), x]
    for j in range(1, J):
        polynomials.append(x * polynomials[j] - j * variance * polynomials[j - 1])
    return AnalyticOUBasis(
        a=(float(a),),
        Sigma=Sigma,
        lambdas=tuple(float(j * a) for j in range(1, J + 1)),
        polynomials=tuple(
            polynomials[j] / math.sqrt(math.factorial(j) * variance**j)
            for j in range(1, J + 1)
        ),
    )
