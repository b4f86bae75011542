import math

import numpy as np
import pytest
from hypothesis import given
from scipy.stats import entropy

from berknash.chain import stationary_outcomes
from berknash.divergence import (NoFiniteDivergence, minimizer_set, row_divergence, strong_identification,
                                 weak_identification, wkld, wkld_values)
from berknash.equilibrium import continuous_minimizer
from berknash.examples.monopoly import MonopolyParams, closest_parameter, monopoly_build
from berknash.examples.search import default_params, search_build, search_oracle, threshold_strategy
from berknash.model import FiniteSmdp, augment_grid

from builders import coin_like, correct_smdps, misspecified_smdps, random_outcome, seeds


def test_row_divergence_examples():
    assert row_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert row_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert row_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.143841, abs=1e-6)


@given(seeds)
def test_row_divergence_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(4), size=2)
    p[rng.integers(4)] = 0.0
    p /= p.sum()
    assert row_divergence(p, q) == pytest.approx(entropy(p, q), rel=1e-12, abs=1e-15)


def test_point_mass_outcome_divergence():
    smdp = coin_like(0.5, [0.25, 1.0])
    m = np.array([[1.0], [0.0]])
    vals = wkld_values(smdp, m)
    assert vals[0] == pytest.approx(0.143841, abs=1e-6)
    assert vals[1] == math.inf


@given(correct_smdps(), seeds)
def test_truth_has_zero_divergence(smdp, seed):
    m = random_outcome(np.random.default_rng(seed), smdp.base.feasible)
    profile = minimizer_set(smdp, m)
    truth = [i for i in range(smdp.n_theta) if np.array_equal(smdp.family[i], smdp.base.kernel)]
    assert abs(profile.min_value) <= 1e-12
    assert all(profile.contains(i) for i in truth)
    assert weak_identification(smdp, m, profile)


@given(misspecified_smdps(max_states=4, max_actions=3, max_theta=5), seeds)
def test_divergence_is_nonnegative_and_linear(smdp, seed):
    rng = np.random.default_rng(seed)
    m1, m2 = random_outcome(rng, smdp.base.feasible), random_outcome(rng, smdp.base.feasible)
    a = float(rng.random())
    k1, k2 = wkld_values(smdp, m1), wkld_values(smdp, m2)
    assert np.all(k1 >= -1e-12)
    assert np.allclose(wkld_values(smdp, a * m1 + (1 - a) * m2), a * k1 + (1 - a) * k2, atol=1e-12)
    assert wkld(smdp, m1, 0) == pytest.approx(k1[0], abs=1e-14)


@given(misspecified_smdps(max_states=4, max_actions=3, max_theta=5), seeds)
def test_zero_mass_pairs_do_not_matter(smdp, seed):
    rng = np.random.default_rng(seed)
    m = random_outcome(rng, smdp.base.feasible)
    s, x = smdp.base.pairs[0]
    m[s, x] = 0.0
    m /= m.sum()
    family = np.array(smdp.family)
    family[:, s, x] = rng.dirichlet(np.ones(smdp.base.n_states), size=smdp.n_theta)
    other = FiniteSmdp(smdp.base, smdp.theta_grid, family)
    assert np.allclose(wkld_values(other, m), wkld_values(smdp, m), atol=1e-14)


@given(seeds)
def test_finer_superset_grid_never_raises_the_minimum(seed):
    rng = np.random.default_rng(seed)
    smdp = monopoly_build(MonopolyParams(grid_points=6))
    sigma_h = float(rng.random())
    (m,) = stationary_outcomes(smdp.base, np.array([[1 - sigma_h, sigma_h]] * 2))
    finer = augment_grid(smdp, rng.random((20, 2)))
    assert minimizer_set(finer, m).min_value <= minimizer_set(smdp, m).min_value


def test_no_finite_divergence_raises():
    smdp = coin_like(0.5, [0.0, 1.0])
    with pytest.raises(NoFiniteDivergence):
        minimizer_set(smdp, np.array([[0.5], [0.5]]))


def test_monopoly_minimizer_is_the_conditional_sale_rate():
    p = MonopolyParams()
    sigma_h = 0.3
    target = closest_parameter(p, sigma_h)
    smdp = augment_grid(monopoly_build(p, check=False), [target])
    (m,) = stationary_outcomes(smdp.base, np.array([[1 - sigma_h, sigma_h]] * 2))
    profile = minimizer_set(smdp, m)
    assert list(profile.minimizer_set) == [smdp.n_theta - 1]
    theta, _ = continuous_minimizer(smdp, m)
    assert np.allclose(theta, target, atol=1e-6)


def test_search_minimizer_matches_the_closed_form_within_the_grid_step():
    p = default_params()
    o = search_oracle(p)
    smdp = search_build(p)
    (m,) = stationary_outcomes(smdp.base, threshold_strategy(p, o.w_star))
    profile = minimizer_set(smdp, m)
    step = float(np.diff(smdp.theta_grid[:, 0]).max())
    best = smdp.theta_grid[profile.minimizer_set, 0]
    assert np.all(np.abs(best - o.theta_of_w(o.w_star)) <= step)


def test_coin_with_two_symmetric_atoms_is_not_identified():
    smdp = coin_like(0.5, [0.25, 0.75])
    m = np.array([[0.5], [0.5]])
    profile = minimizer_set(smdp, m)
    assert list(profile.minimizer_set) == [0, 1]
    assert not weak_identification(smdp, m, profile)


def test_weak_but_not_strong_when_a_price_is_never_charged():
    smdp = monopoly_build(MonopolyParams(grid_points=11))
    (m,) = stationary_outcomes(smdp.base, np.array([[0.0, 1.0]] * 2))
    profile = minimizer_set(smdp, m)
    assert profile.minimizer_set.size == 11       # theta_L is free
    assert weak_identification(smdp, m, profile)
    assert not strong_identification(smdp, m, profile)
    single = minimizer_set(smdp, m)
    one = type(single)(single.values, single.min_value, single.minimizer_set[:1], single.tol_k)
    assert weak_identification(smdp, m, one) and strong_identification(smdp, m, one)
