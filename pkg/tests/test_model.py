import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nscascade.model import (
    click_distribution,
    expected_reward,
    first_click_position,
    list_reward,
    optimal_list,
    per_step_regret,
    realized_reward,
    validate_list,
)

probs = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def instance(draw, max_L=8):
    L = draw(st.integers(1, max_L))
    K = draw(st.integers(1, L))
    alpha = draw(st.lists(probs, min_size=L, max_size=L))
    ranked = draw(st.permutations(range(1, L + 1)))[:K]
    return np.array(alpha), tuple(ranked), K


def test_reward_examples():
    assert expected_reward((1, 2), [0.5, 0.5, 0.0]) == pytest.approx(0.75)
    assert expected_reward((3,), [0.5, 0.5, 0.0]) == 0.0
    assert realized_reward((2, 3), [1, 0, 1]) == 1
    assert realized_reward((2,), [1, 0, 1]) == 0


def test_first_click():
    assert first_click_position((3, 1, 2), [1, 0, 1]) == 1
    assert first_click_position((2, 1, 3), [1, 0, 1]) == 2
    assert first_click_position((2,), [1, 0, 1]) == 2


def test_click_distribution_example():
    dist = click_distribution((1, 2), [0.5, 0.2])
    np.testing.assert_allclose(dist, [0.5, 0.1, 0.4])


def test_optimal_list_ties_prefer_smaller_id():
    assert optimal_list([0.3, 0.5, 0.5, 0.1], 2) == (2, 3)
    assert optimal_list([0.2, 0.2, 0.2], 2) == (1, 2)


@pytest.mark.parametrize("ranked", [(1, 1), (0, 2), (1, 5), (1, 2, 3, 4, 5)])
def test_invalid_lists(ranked):
    with pytest.raises(ValueError):
        validate_list(ranked, 4)


def test_bad_attractions():
    with pytest.raises(ValueError):
        expected_reward((1,), [1.2, 0.1])
    with pytest.raises(ValueError):
        expected_reward((1,), [float("nan"), 0.1])


@given(instance())
def test_reward_bounds_and_distribution(case):
    alpha, ranked, K = case
    r = expected_reward(ranked, alpha)
    assert 0.0 <= r <= 1.0
    dist = click_distribution(ranked, alpha)
    assert dist.shape == (K + 1,)
    assert np.all(dist >= 0)
    assert math.isclose(dist.sum(), 1.0, rel_tol=0, abs_tol=1e-12)
    # clicking somewhere is the reward
    assert math.isclose(dist[:-1].sum(), r, abs_tol=1e-12)


@given(instance())
def test_reward_is_order_invariant(case):
    alpha, ranked, _ = case
    r = expected_reward(ranked, alpha)
    for perm in itertools.islice(itertools.permutations(ranked), 24):
        assert expected_reward(perm, alpha) == r


@given(instance())
def test_regret_nonnegative_and_zero_at_optimum(case):
    alpha, ranked, K = case
    assert per_step_regret(ranked, alpha, K) >= 0.0
    assert per_step_regret(optimal_list(alpha, K), alpha, K) == 0.0


@given(instance(max_L=6))
def test_optimal_list_beats_every_list(case):
    alpha, _, K = case
    best = expected_reward(optimal_list(alpha, K), alpha)
    for ranked in itertools.permutations(range(1, alpha.size + 1), K):
        assert expected_reward(ranked, alpha) <= best + 1e-15


@given(instance(), st.data())
def test_realized_reward_matches_click(case, data):
    alpha, ranked, K = case
    attracted = data.draw(st.lists(st.integers(0, 1), min_size=alpha.size, max_size=alpha.size))
    c = first_click_position(ranked, attracted)
    assert 1 <= c <= K + 1
    assert realized_reward(ranked, attracted) == int(c <= K)


@settings(max_examples=50)
@given(st.lists(probs, min_size=1, max_size=10))
def test_list_reward_closed_form(values):
    assert list_reward(values) == pytest.approx(1.0 - np.prod(1.0 - np.array(values)), abs=1e-12)
