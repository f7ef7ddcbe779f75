"""Euler-Maruyama paths and observation sets."""

from __future__ import annotations

import math

import numpy as np
import pytest

from homodrift.exceptions import SimulationError
from homodrift.homogenize import HomogenizedModel
from homodrift.potentials import (
    FastPotential,
    MultiscaleModel,
    ParticleModel,
    SlowPotential,
)
from homodrift.simulate import (
    ObservationSet,
    default_fine_step,
    derive_seed,
    euler_maruyama,
    observation_stride,
    simulate_homogenized,
    simulate_multiscale,
    simulate_observations,
    simulate_particles,
    subsample,
)


@pytest.fixture
def homogenized_model() -> HomogenizedModel:
    slow = SlowPotential.from_spec('quadratic')
    return HomogenizedModel(A=(1.0,), Sigma=0.5, slow=slow)


@pytest.fixture
def multiscale_model() -> MultiscaleModel:
    return MultiscaleModel(
        alpha=(1.0,),
        sigma=0.5,
        epsilon=0.1,
        slow=SlowPotential.from_spec('quadratic'),
        fast=FastPotential.from_spec('cos'),
    )


def test_paths_are_reproducible(homogenized_model: HomogenizedModel) -> None:
    first = simulate_homogenized(homogenized_model, T=5.0, h=0.01, seed=11)
    second = simulate_homogenized(homogenized_model, T=5.0, h=0.01, seed=11)
    other = simulate_homogenized(homogenized_model, T=5.0, h=0.01, seed=12)

    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    assert len(first.values) == 501
    assert first.values[0] == 0.0
    assert first.horizon == pytest.approx(5.0)


def test_noiseless_linear_decay() -> None:
    path = euler_maruyama(lambda x: -x, 0.0, 1.0, 0.1, 10, seed=0)

    np.testing.assert_allclose(path, 0.9 ** np.arange(11), rtol=1e-12)


def test_explicit_increments_drive_the_path() -> None:
    increments = np.array([1.0, -2.0, 0.5, 0.0, 3.0])

    path = euler_maruyama(lambda _: 0.0, 0.5, 0.0, 0.01, 5, increments=increments)

    np.testing.assert_allclose(path[1:], 0.1 * np.cumsum(increments), rtol=1e-12)


def test_increments_shape_is_checked() -> None:
    with pytest.raises(SimulationError):
        euler_maruyama(lambda x: -x, 1.0, 0.0, 0.01, 5, increments=np.zeros(4))
    with pytest.raises(SimulationError):
        euler_maruyama(lambda x: -x, 1.0, 0.0, 0.01, 5)
    with pytest.raises(SimulationError):
        euler_maruyama(lambda x: -x, -1.0, 0.0, 0.01, 5, seed=0)


def test_blow_up_reports_the_step() -> None:
    with pytest.raises(SimulationError) as exception:
        euler_maruyama(lambda x: x * x * x, 0.0, 2.0, 0.5, 100, seed=0)

    assert exception.value.step == 6
    assert 'step 6' in str(exception.value)


def test_strided_storage_matches_subsampling(
    homogenized_model: HomogenizedModel,
    multiscale_model: MultiscaleModel,
) -> None:
    full = simulate_homogenized(homogenized_model, T=10.0, h=0.01, seed=3)
    strided = simulate_observations(
        homogenized_model,
        T=10.0,
        delta=0.5,
        h=0.01,
        seed=3,
    )

    np.testing.assert_array_equal(strided.x, subsample(full, 0.5).x)
    assert strided.n == 20

    full = simulate_multiscale(multiscale_model, T=2.0, h=1e-4, seed=5)
    strided = simulate_observations(multiscale_model, T=2.0, delta=0.1, h=1e-4, seed=5)

    np.testing.assert_array_equal(strided.x, subsample(full, 0.1).x)


def test_particle_paths(multiscale_model: MultiscaleModel) -> None:
    particles = ParticleModel(
        alpha=1.0,
        theta=0.5,
        sigma=0.5,
        epsilon=0.1,
        fast=multiscale_model.fast,
        d=3,
    )

    full = simulate_particles(
        1.0,
        0.5,
        0.5,
        0.1,
        particles.fast,
        3,
        T=1.0,
        h=1e-3,
        seed=2,
    )
    strided = simulate_observations(particles, T=1.0, delta=0.1, h=1e-3, seed=2)

    assert full.values.shape == (1001, 3)
    np.testing.assert_array_equal(strided.x, subsample(full, 0.1).x)
    assert strided.dimension == 3
    np.testing.assert_allclose(strided.summed().x, strided.x.sum(axis=1))
    with pytest.raises(SimulationError):
        simulate_particles(1.0, 0.5, 0.5, 0.1, particles.fast, 1, T=1.0, h=1e-3)


def test_particles_without_noise_or_potential_stay_at_rest() -> None:
    path = simulate_particles(
        1.0,
        1.0,
        1.0,
        0.1,
        FastPotential.from_spec('zero'),
        2,
        T=0.1,
        h=0.01,
        increments=np.zeros((10, 2)),
    )

    np.testing.assert_array_equal(path.values, np.zeros((11, 2)))


def test_default_fine_step() -> None:
    assert default_fine_step(0.1) == pytest.approx(1e-3)
    assert default_fine_step(0.1, delta=0.5) == pytest.approx(1e-3)
    assert default_fine_step(0.1, delta=0.05, rule='min') == pytest.approx(5e-4)
    h = default_fine_step(0.3, delta=1.0)
    assert h == pytest.approx(1 / 38)
    assert observation_stride(1.0, h) == 38


def test_observation_spacing_is_checked(homogenized_model: HomogenizedModel) -> None:
    path = simulate_homogenized(homogenized_model, T=1.0, h=0.1, seed=0)

    with pytest.raises(SimulationError):
        observation_stride(0.1, 0.2)
    with pytest.raises(SimulationError):
        subsample(path, 0.25)
    with pytest.raises(SimulationError):
        subsample(path, 2.0)


def test_euler_maruyama_strong_order() -> None:
    """Pathwise error against a fine reference shrinks linearly with the step."""
    generator = np.random.default_rng(17)
    paths, fine_steps = 200, 4096
    h_fine = 1 / fine_steps
    normals = generator.standard_normal((fine_steps, paths))
    reference = euler_maruyama(
        lambda x: -x,
        1.0,
        np.ones(paths),
        h_fine,
        fine_steps,
        increments=normals,
    )[-1]

    ratios = (64, 128, 256, 512)
    errors = []
    for ratio in ratios:
        coarse = normals.reshape(fine_steps // ratio, ratio, paths).sum(axis=1)
        path = euler_maruyama(
            lambda x: -x,
            1.0,
            np.ones(paths),
            h_fine * ratio,
            fine_steps // ratio,
            increments=coarse / math.sqrt(ratio),
        )
        errors.append(np.mean(np.abs(path[-1] - reference)))

    slope = np.polyfit(np.log(np.array(ratios) * h_fine), np.log(errors), 1)[0]
    assert 0.75 < slope < 1.25


def test_transition_moments_match_the_discrete_recursion() -> None:
    paths, h, n_steps, a, sigma = 40_000, 0.01, 100, 2.0, 0.5
    path = euler_maruyama(lambda x: -a * x, sigma, np.ones(paths), h, n_steps, seed=8)
    final = path[-1]

    mean = (1 - a * h) ** n_steps
    variance = 0.0
    for _ in range(n_steps):
        variance = (1 - a * h) ** 2 * variance + 2 * sigma * h

    assert abs(final.mean() - mean) < 4 * math.sqrt(variance / paths)
    assert final.var(ddof=1) == pytest.approx(variance, rel=0.04)


def test_derived_seeds_are_stable_and_distinct() -> None:
    seeds = {
        derive_seed(2021, delta_index, rep)
        for delta_index in range(3)
        for rep in range(5)
    }

    assert len(seeds) == 15
    assert derive_seed(2021, 1, 2) == derive_seed(2021, 1, 2)
    assert derive_seed(2021, 1, 2) != derive_seed(2022, 1, 2)


def test_observation_set_validation() -> None:
    x = np.arange(5.0)

    with pytest.raises(SimulationError):
        ObservationSet(x=x, delta=0.0)
    with pytest.raises(SimulationError):
        ObservationSet(x=x, delta=1.0, z=np.ones(5))
    with pytest.raises(SimulationError):
        ObservationSet(x=x, delta=1.0, z=np.zeros(4))


def test_prefix_truncates_both_series() -> None:
    obs = ObservationSet(x=np.arange(6.0), delta=0.5).filtered()

    prefix = obs.prefix(3)

    assert prefix.n == 3
    np.testing.assert_array_equal(prefix.x, [0.0, 1.0, 2.0, 3.0])
    assert prefix.z is not None
    np.testing.assert_array_equal(prefix.z, obs.z[:4])
    with pytest.raises(SimulationError):
        obs.prefix(6)


def test_particles_without_interaction_are_independent() -> None:
    path = simulate_particles(
        1.0,
        0.0,
        0.5,
        0.1,
        FastPotential.from_spec('cos'),
        2,
        T=100.0,
        h=1e-3,
        seed=21,
        stride=100,
    )

    increments = np.diff(path.values, axis=0)
    correlation = np.corrcoef(increments.T)[0, 1]

    assert abs(correlation) < 3 / math.sqrt(len(increments))


def test_permuting_the_noise_permutes_the_particles() -> None:
    noise = np.random.default_rng(4).standard_normal((1000, 3))
    order = [2, 0, 1]

    def run(increments: np.ndarray) -> np.ndarray:
        return simulate_particles(
            1.0,
            0.8,
            0.5,
            0.1,
            FastPotential.from_spec('cos'),
            3,
            T=1.0,
            h=1e-3,
            increments=increments,
        ).values

    np.testing.assert_allclose(run(noise[:, order]), run(noise)[:, order], atol=1e-12)


def test_sum_of_two_interacting_particles_has_the_free_variance() -> None:
    alpha, sigma = 1.0, 0.5
    path = simulate_particles(
        alpha,
        1.0,
        sigma,
        0.1,
        FastPotential.from_spec('zero'),
        2,
        T=2000.0,
        h=0.01,
        seed=8,
        stride=10,
    )

    total = path.values[100:].sum(axis=1)

    assert total.var() == pytest.approx(2 * sigma / alpha, rel=0.1)
