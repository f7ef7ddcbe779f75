"""Eigenpairs of the homogenized generator."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import trapezoid

from homodrift.exceptions import ConfigError, InadmissibleParameterError, SpectralError
from homodrift.logging import logger
from homodrift.potentials import SlowPotential
from homodrift.simulate import ObservationSet
from homodrift.spectral import (
    Mesh,
    assemble,
    build_mesh,
    eval_eigenfunction,
    ou_eigen_analytic,
    solve_eigenpairs,
)

if TYPE_CHECKING:
    from pytest_mock import MockerFixture

QUADRATIC = SlowPotential.from_spec('quadratic')
QUARTIC = SlowPotential.from_spec('quartic')


def test_quadratic_eigenvalues_are_integers() -> None:
    mesh = Mesh(R=6.0, n_elems=240)

    basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 4)

    for j, value in enumerate(basis.lambdas, start=1):
        assert abs(value - j) < 0.03 * j
    assert basis.J == 4


def test_eigenvalues_scale_with_the_drift() -> None:
    mesh = Mesh(R=3.0, n_elems=240)

    basis = solve_eigenpairs(assemble(mesh, (2.0,), 0.5, QUADRATIC), 3)

    np.testing.assert_allclose(basis.lambdas, [2.0, 4.0, 6.0], rtol=0.02)


def test_quartic_eigenvalues_converge_quadratically() -> None:
    def lambdas(n_elems: int) -> np.ndarray:
        mesh = Mesh(R=3.5, n_elems=n_elems)
        basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUARTIC), 2)
        return np.array(basis.lambdas)

    reference = lambdas(1120)
    coarse = np.abs(lambdas(70) - reference)
    fine = np.abs(lambdas(140) - reference)

    assert np.all(coarse / fine >= 3)


def test_eigenvectors_are_normalized_signed_and_accurate() -> None:
    matrices = assemble(Mesh(R=4.0, n_elems=160), (1.0,), 1.0, QUARTIC)

    basis = solve_eigenpairs(matrices, 3)

    for j, theta in enumerate(basis.thetas):
        assert theta @ matrices.M @ theta == pytest.approx(1.0, abs=1e-12)
        assert theta[-1] > 0
        residual = matrices.S @ theta - basis.lambdas[j] * (matrices.M @ theta)
        assert np.linalg.norm(residual) < 1e-8
    gram = basis.thetas @ matrices.M @ basis.thetas.T
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-10)


def test_weight_has_unit_mass_on_the_mesh() -> None:
    matrices = assemble(Mesh(R=4.0, n_elems=160), (1.0,), 1.0, QUADRATIC)

    ones = np.ones(161)

    assert ones @ matrices.M @ ones == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(matrices.S @ ones, 0.0, atol=1e-12)
    nodes = matrices.mesh.nodes
    assert matrices.weight(0.0) == pytest.approx(
        1 / trapezoid(np.exp(-(nodes**2) / 2), x=nodes),
        rel=1e-3,
    )


def test_constant_shift_of_the_potential_changes_nothing() -> None:
    mesh = Mesh(R=5.0, n_elems=200)
    shifted = SlowPotential.from_spec('poly:[5, 0, 0.5]')

    reference = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 3)
    basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, shifted), 3)

    np.testing.assert_allclose(basis.lambdas, reference.lambdas, rtol=1e-10)
    np.testing.assert_allclose(basis.thetas, reference.thetas, atol=1e-10)


def test_large_exponents_are_shifted_before_exponentiation() -> None:
    mesh = Mesh(R=5.0, n_elems=200)
    deep = SlowPotential.from_spec('poly:[-1000, 0, 0.5]')

    reference = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 2)
    basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, deep), 2)

    np.testing.assert_allclose(basis.lambdas, reference.lambdas, rtol=1e-8)


def test_analytic_basis_is_orthonormal() -> None:
    a, Sigma = 2.0, 0.5
    basis = ou_eigen_analytic(a, Sigma, 4)
    nodes, weights = hermegauss(20)
    x = math.sqrt(Sigma / a) * nodes
    weights = weights / math.sqrt(2 * math.pi)

    values = np.stack([basis.evaluate(j, x) for j in range(1, 5)])
    gram = (values * weights) @ values.T

    assert basis.lambdas == (2.0, 4.0, 6.0, 8.0)
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(values @ weights, 0.0, atol=1e-12)


def test_finite_elements_approach_the_analytic_basis() -> None:
    mesh = Mesh(R=6.0, n_elems=480)
    basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 3)
    analytic = ou_eigen_analytic(1.0, 1.0, 3)
    inner = np.linspace(-3.0, 3.0, 61)

    for j in range(1, 4):
        np.testing.assert_allclose(
            eval_eigenfunction(basis, j, inner),
            eval_eigenfunction(analytic, j, inner),
            atol=2e-2,
        )


def test_clamping_outside_the_mesh_is_logged(mocker: MockerFixture) -> None:
    mesh = Mesh(R=4.0, n_elems=80)
    basis = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 1)
    warning = mocker.spy(logger, 'warning')

    values = basis.evaluate(1, [10.0, -10.0, 0.0])

    assert values[0] == basis.thetas[0][-1]
    assert values[1] == basis.thetas[0][0]
    warning.assert_called_once()
    assert warning.call_args.kwargs['extra']['count'] == 2


def test_build_mesh_covers_the_observations() -> None:
    x = np.array([0.0, 1.0, -3.0, 2.0])

    assert build_mesh(None).R == 1.7
    mesh = build_mesh(ObservationSet(x=x, delta=1.0), h_target=0.05)
    assert mesh.R == pytest.approx(3.1)
    assert mesh.n_elems == 124
    assert mesh.h == pytest.approx(0.05)
    assert build_mesh(ObservationSet(x=x / 10, delta=1.0)).R == 1.7

    with pytest.raises(SpectralError):
        build_mesh(ObservationSet(x=np.array([0.0, np.inf]), delta=1.0))
    with pytest.raises(ConfigError):
        build_mesh(None, h_target=0.0)


def test_invalid_requests() -> None:
    mesh = Mesh(R=2.0, n_elems=4)
    matrices = assemble(mesh, (1.0,), 1.0, QUADRATIC)

    with pytest.raises(SpectralError):
        solve_eigenpairs(matrices, 4)
    with pytest.raises(SpectralError):
        solve_eigenpairs(matrices, 0)
    with pytest.raises(ConfigError):
        assemble(mesh, (1.0,), 0.0, QUADRATIC)
    with pytest.raises(ConfigError):
        assemble(mesh, (1.0,), 1.0, QUADRATIC, n_quad_per_elem=3)
    with pytest.raises(InadmissibleParameterError):
        ou_eigen_analytic(-1.0, 1.0, 2)
    with pytest.raises(SpectralError):
        ou_eigen_analytic(1.0, 1.0, 2).evaluate(3, 0.0)


def test_large_positive_offsets_do_not_overflow() -> None:
    mesh = Mesh(R=5.0, n_elems=200)
    high = SlowPotential.from_spec('poly:[800, 0, 0.5]')

    reference = solve_eigenpairs(assemble(mesh, (1.0,), 1.0, QUADRATIC), 2)
    with np.errstate(over='raise', invalid='raise', divide='raise'):
        matrices = assemble(mesh, (1.0,), 1.0, high)
    basis = solve_eigenpairs(matrices, 2)

    np.testing.assert_allclose(basis.lambdas, reference.lambdas, rtol=1e-8)
    assert np.isfinite(matrices.log_normalizer)


def test_underflowing_tails_are_dropped() -> None:
    with np.errstate(over='raise', invalid='raise', divide='raise'):
        wide = solve_eigenpairs(
            assemble(Mesh(R=4.0, n_elems=160), (1.0,), 0.05, QUARTIC),
            3,
        )
        narrow = solve_eigenpairs(
            assemble(Mesh(R=3.0, n_elems=120), (1.0,), 0.05, QUARTIC),
            3,
        )

    np.testing.assert_allclose(wide.lambdas, narrow.lambdas, rtol=1e-6)
    assert np.all(np.isfinite(wide.thetas))
    # the outermost nodes repeat the last node carrying mass
    assert wide.thetas[0][-1] == wide.thetas[0][-2]
    np.testing.assert_allclose(wide.thetas[:, 20:141], narrow.thetas, atol=1e-6)


@pytest.mark.parametrize('a', [0.5, 1.0, 2.0])
def test_finite_elements_match_the_analytic_basis(a: float) -> None:
    matrices = assemble(Mesh(R=6.0, n_elems=240), (a,), 1.0, QUADRATIC)
    basis = solve_eigenpairs(matrices, 3)
    analytic = ou_eigen_analytic(a, 1.0, 3)
    nodes = matrices.mesh.nodes

    for j in range(1, 4):
        assert abs(basis.lambdas[j - 1] - j * a) <= 0.03 * j * a
        exact = analytic.evaluate(j, nodes)
        exact = exact / math.sqrt(float(exact @ matrices.M @ exact))
        difference = basis.thetas[j - 1] - exact
        assert math.sqrt(float(difference @ matrices.M @ difference)) <= 0.03
