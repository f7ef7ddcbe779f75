"""Exponential filter of the observations."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import lfilter

from homodrift.exceptions import ConfigError
from homodrift.filterbank import (
    FilterSpec,
    filter_continuous,
    filter_direct,
    filter_recurrent,
)


@settings(deadline=None, max_examples=60)
@given(
    x=arrays(
        np.float64,
        st.integers(min_value=1, max_value=60),
        elements=st.floats(min_value=-100, max_value=100),
    ),
    delta=st.floats(min_value=0.01, max_value=5.0),
)
def test_recursion_matches_direct_sum(x: np.ndarray, delta: float) -> None:
    np.testing.assert_allclose(
        filter_recurrent(x, delta),
        filter_direct(x, delta),
        rtol=1e-9,
        atol=1e-8,
    )


@pytest.mark.parametrize('seed', range(100))
def test_recursion_matches_direct_sum_on_random_walks(seed: int) -> None:
    generator = np.random.default_rng(seed)
    x = np.cumsum(generator.standard_normal(200))
    delta = generator.uniform(0.05, 2.0)

    np.testing.assert_allclose(
        filter_recurrent(x, delta),
        filter_direct(x, delta),
        rtol=1e-10,
        atol=1e-10,
    )


def test_vector_series_are_filtered_per_coordinate() -> None:
    x = np.random.default_rng(1).standard_normal((50, 3))

    filtered = filter_recurrent(x, 0.3)

    assert filtered.shape == (50, 3)
    for column in range(3):
        expected = filter_direct(x[:, column], 0.3)
        np.testing.assert_allclose(filtered[:, column], expected)


def test_constant_series_converges_to_the_stationary_gain() -> None:
    spec = FilterSpec(delta=0.5)

    filtered = filter_recurrent(np.full(200, 2.0), 0.5)

    assert filtered[0] == 0.0
    assert filtered[1] == pytest.approx(0.5 * math.exp(-0.5) * 2.0)
    assert filtered[-1] / 2.0 == pytest.approx(spec.stationary_gain(), rel=1e-12)


def test_filter_is_causal() -> None:
    x = np.random.default_rng(2).standard_normal(40)
    changed = x.copy()
    changed[25] += 10.0

    before, after = filter_recurrent(x, 0.2), filter_recurrent(changed, 0.2)

    np.testing.assert_array_equal(before[:26], after[:26])
    assert not np.allclose(before[26:], after[26:])


def test_continuous_filter_of_a_constant() -> None:
    h = 1e-3
    t = h * np.arange(5001)

    filtered = filter_continuous(np.ones_like(t), h)

    np.testing.assert_allclose(filtered, 1 - np.exp(-t), atol=1e-6)


def test_invalid_inputs() -> None:
    with pytest.raises(ConfigError):
        filter_recurrent([1.0, 2.0], 0.0)
    with pytest.raises(ConfigError):
        filter_recurrent([], 1.0)
    with pytest.raises(ConfigError):
        filter_direct(1.0, 1.0)
    with pytest.raises(ConfigError):
        FilterSpec(delta=1.0, rate=-1.0)


@pytest.mark.parametrize('delta', [0.01, 0.1, 1.0, 3.0])
def test_filter_is_bounded_by_the_stationary_gain(delta: float) -> None:
    x = np.random.default_rng(5).uniform(-4.0, 4.0, 500)

    filtered = filter_recurrent(x, delta)

    bound = FilterSpec(delta=delta).stationary_gain() * np.abs(x).max()
    assert np.abs(filtered).max() <= bound * (1 + 1e-12)


def test_discrete_filter_converges_to_the_continuous_one() -> None:
    h, T = 1e-4, 20.0
    noise = np.random.default_rng(9).standard_normal(round(T / h))
    # Ornstein-Uhlenbeck path by Euler-Maruyama, driven through lfilter
    x_fine = np.concatenate(
        [[0.0], lfilter([math.sqrt(2 * h)], [1.0, -(1 - h)], noise)],
    )
    reference = filter_continuous(x_fine, h)

    deltas = np.array([0.1, 0.05, 0.025, 0.0125])
    errors = []
    for delta in deltas:
        stride = round(delta / h)
        filtered = filter_recurrent(x_fine[::stride], delta)
        errors.append(np.abs(filtered - reference[::stride]).mean())
    slope = np.polyfit(np.log(deltas), np.log(errors), 1)[0]

    assert slope >= 0.4
    assert errors[-1] < errors[0]
