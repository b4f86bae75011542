import numpy as np
import pytest
from hypothesis import given, strategies as st

from berknash.examples.monopoly import MonopolyParams, monopoly_build
from berknash.model import (REGULARITY_FAILED, FiniteMdp, augment_grid, count_pure_strategies, find_theta,
                            mixture_kernel, pad_belief, perturb_strategy, point_mass, pure_strategies,
                            uniform_grid, validate)

from builders import coin_like, misspecified_smdps, one_state_mdp, random_strategy, seeds, smdp_from_kernels


def test_monopoly_model_is_valid():
    assert validate(monopoly_build(MonopolyParams())).ok


def test_short_kernel_row_is_named():
    mdp = one_state_mdp(n_actions=2)
    k = np.array(mdp.kernel)
    k[0, 1, 0] = 0.99
    report = validate(mdp.with_kernel(k))
    assert not report.ok
    assert any("(s, x1)" in msg for msg in report.issues)


def test_regularity_flag_when_no_grid_point_covers_the_truth():
    smdp = coin_like(0.5, [0.0, 1.0])
    report = validate(smdp)
    assert any(msg.startswith(REGULARITY_FAILED) for msg in report.issues)


def test_bad_discount_and_infeasible_mass_reported():
    mdp = one_state_mdp(discount=1.0, n_actions=2)
    feasible = np.array([[True, False]])
    bad = FiniteMdp(mdp.states, mdp.actions, feasible, mdp.q0, mdp.kernel, mdp.payoff, 1.0)
    issues = validate(bad).issues
    assert any("discount" in msg for msg in issues)
    assert any("infeasible but nonzero" in msg for msg in issues)


def test_shape_mismatch_raises():
    mdp = one_state_mdp()
    with pytest.raises(ValueError):
        FiniteMdp(mdp.states, mdp.actions, mdp.feasible, np.array([0.5, 0.5]), mdp.kernel, mdp.payoff, 0.5)


@given(misspecified_smdps())
def test_validate_is_pure(smdp):
    before = smdp.family.copy()
    first, second = validate(smdp), validate(smdp)
    assert first == second
    assert np.array_equal(before, smdp.family)


def test_mixture_of_point_mass_is_that_kernel():
    smdp = coin_like(0.5, [0.25, 0.75])
    assert np.array_equal(mixture_kernel(smdp, [0.0, 1.0]), smdp.family[1])


def test_uniform_mixture_of_opposite_rows():
    smdp = coin_like(0.5, [1.0, 0.0])
    assert np.allclose(mixture_kernel(smdp, [0.5, 0.5])[0, 0], [0.5, 0.5])


@given(misspecified_smdps(), seeds, st.sampled_from([0.0, 0.25, 0.5, 1.0]))
def test_mixture_is_linear_in_the_belief(smdp, seed, alpha):
    rng = np.random.default_rng(seed)
    mu1, mu2 = rng.dirichlet(np.ones(smdp.n_theta), size=2)
    lhs = mixture_kernel(smdp, alpha * mu1 + (1 - alpha) * mu2)
    rhs = alpha * mixture_kernel(smdp, mu1) + (1 - alpha) * mixture_kernel(smdp, mu2)
    assert np.allclose(lhs, rhs, atol=1e-14)
    sums = lhs.sum(axis=2)[smdp.base.feasible]
    assert np.allclose(sums, 1.0, atol=1e-12)


@given(misspecified_smdps(), seeds, st.floats(0.0, 0.25))
def test_perturbed_strategy_respects_the_floor(smdp, seed, frac):
    mdp = smdp.base
    eps = frac / mdp.n_actions
    sigma = perturb_strategy(random_strategy(np.random.default_rng(seed), mdp.feasible), mdp.feasible, eps)
    assert np.all(sigma[mdp.feasible] >= eps - 1e-12)
    assert np.allclose(sigma.sum(axis=1), 1.0)
    assert np.all(sigma[~mdp.feasible] == 0)


def test_pure_strategy_enumeration():
    smdp = monopoly_build(MonopolyParams(grid_points=3))
    strategies = list(pure_strategies(smdp.base))
    assert len(strategies) == count_pure_strategies(smdp.base) == 4
    assert len({s.tobytes() for s in strategies}) == 4


def test_uniform_grid_and_lookup():
    grid = uniform_grid([(0, 1), (0, 2)], 3)
    assert grid.shape == (9, 2)
    smdp = monopoly_build(MonopolyParams(grid_points=3))
    assert find_theta(smdp, [0.5, 1.0]) == 5
    assert find_theta(smdp, [0.3, 0.3]) == -1


def test_augment_grid_keeps_indices_and_skips_duplicates():
    smdp = monopoly_build(MonopolyParams(grid_points=3))
    bigger = augment_grid(smdp, [[0.25, 0.75], [0.5, 0.5]])
    assert bigger.n_theta == smdp.n_theta + 1
    assert np.array_equal(bigger.family[: smdp.n_theta], smdp.family)
    assert np.allclose(bigger.family[-1, :, 1, 1], 0.75)
    assert np.array_equal(pad_belief(point_mass(9, 2), 10), point_mass(10, 2))


def test_augment_grid_requires_a_kernel_map():
    smdp = smdp_from_kernels(one_state_mdp(), [np.ones((1, 1, 1))])
    with pytest.raises(ValueError):
        augment_grid(smdp, [[3.0]])
