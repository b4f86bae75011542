import numpy as np
import pytest
from hypothesis import given

from berknash.examples.monopoly import MonopolyParams, c_delta, monopoly_build, monopoly_mdp, subjective_kernel
from berknash.mdp import (bellman_q, greedy_strategy, is_optimal, optimal_action_sets, perturbed_value_iteration,
                          policy_evaluation, policy_iteration, q_values, value_iteration)
from berknash.model import FiniteMdp, perturb_strategy

from builders import one_state_mdp, random_mdps, random_strategy, seeds


def test_geometric_series():
    v = value_iteration(one_state_mdp(payoff=1.0, discount=0.5), tol=1e-12)
    assert v.values[0] == pytest.approx(2.0, abs=1e-11)


@given(random_mdps())
def test_myopic_case_is_the_best_expected_payoff(mdp):
    mdp = mdp.with_discount(0.0)
    v = value_iteration(mdp)
    r = np.where(mdp.feasible, mdp.expected_payoff, -np.inf)
    assert np.allclose(v.values, r.max(axis=1), atol=1e-14)
    assert np.allclose(q_values(mdp, v)[mdp.feasible], mdp.expected_payoff[mdp.feasible])


def test_q_values_with_a_deterministic_kernel():
    # three states on a cycle; action 0 stays, action 1 moves on
    n = 3
    k = np.zeros((n, 2, n))
    for s in range(n):
        k[s, 0, s] = 1.0
        k[s, 1, (s + 1) % n] = 1.0
    pay = np.zeros((n, 2, n))
    pay[:, 1, :] = np.arange(n)[None, :]
    mdp = FiniteMdp(("a", "b", "c"), ("stay", "move"), np.ones((n, 2), bool), np.ones(n) / n, k, pay, 0.8)
    v = value_iteration(mdp, tol=1e-12)
    q = q_values(mdp, v)
    for s in range(n):
        g = (s + 1) % n
        assert q[s, 1] == pytest.approx(g + 0.8 * v.values[g], abs=1e-10)
        assert q[s, 0] == pytest.approx(0.8 * v.values[s], abs=1e-10)


def _truncated_q(mdp, horizon=30):
    """Finite-horizon backward induction; the tail is below delta^30 times the payoff bound."""
    v = np.zeros(mdp.n_states)
    q = None
    for _ in range(horizon):
        q = np.where(mdp.feasible, mdp.expected_payoff + mdp.discount * mdp.kernel @ v, -np.inf)
        v = q.max(axis=1)
    return q


def test_q_values_match_truncated_backward_induction():
    rng = np.random.default_rng(4)
    from berknash.examples.random_instances import random_mdp
    mdp = random_mdp(rng, 4, 3, discount=0.6)
    q = q_values(mdp, value_iteration(mdp, tol=1e-13))
    assert np.allclose(q[mdp.feasible], _truncated_q(mdp)[mdp.feasible], atol=1e-6)


@given(random_mdps())
def test_bellman_residual_is_within_tolerance(mdp):
    v = value_iteration(mdp, tol=1e-10)
    q = bellman_q(mdp, v.values)
    assert np.max(np.abs(q.max(axis=1) - v.values)) <= 1e-10


@given(random_mdps())
def test_policy_iteration_agrees_with_value_iteration(mdp):
    a = value_iteration(mdp, tol=1e-12).values
    b = policy_iteration(mdp).values
    assert np.allclose(a, b, atol=1e-9)


@given(random_mdps())
def test_greedy_strategy_is_optimal_and_evaluates_to_v(mdp):
    v = value_iteration(mdp, tol=1e-12)
    sets = optimal_action_sets(mdp, 1e-9, v)
    for uniform in (False, True):
        sigma = greedy_strategy(mdp, sets, uniform)
        ok, worst = is_optimal(mdp, sigma)
        assert ok and worst <= 1e-9
        assert np.allclose(policy_evaluation(mdp, sigma).values, v.values, atol=1e-9)


def test_strict_gaps_give_singletons_and_ties_give_both():
    mdp = one_state_mdp(n_actions=2)
    pay = np.array(mdp.payoff)
    tie = optimal_action_sets(mdp)
    assert list(tie.actions(0)) == [0, 1]
    pay[0, 1, 0] = 0.5
    strict = optimal_action_sets(FiniteMdp(mdp.states, mdp.actions, mdp.feasible, mdp.q0, mdp.kernel, pay, 0.5))
    assert list(strict.actions(0)) == [0]


def test_monopoly_indifference_lists_both_prices():
    p = MonopolyParams(delta=0.0)
    theta = (0.7, 0.5)        # H * 0.5 = 0.7 = L * 0.7
    mdp = monopoly_mdp(p).with_kernel(subjective_kernel(theta))
    sets = optimal_action_sets(mdp)
    assert sets.mask.all()


def test_small_mass_on_a_dominated_action_is_flagged():
    mdp = one_state_mdp(n_actions=2)
    pay = np.array(mdp.payoff)
    pay[0, 1, 0] = 0.0
    mdp = FiniteMdp(mdp.states, mdp.actions, mdp.feasible, mdp.q0, mdp.kernel, pay, 0.5)
    ok, worst = is_optimal(mdp, np.array([[1 - 1e-3, 1e-3]]))
    assert not ok and worst == pytest.approx(1.0)


def test_always_low_is_optimal_below_c_delta():
    p = MonopolyParams(delta=0.5)
    bound = c_delta(p)
    low = MonopolyParams(delta=0.5, H=min(bound, p.q0L / p.q0H) * 0.999)
    mdp = monopoly_mdp(low)
    sigma = np.array([[1.0, 0.0], [1.0, 0.0]])
    v = value_iteration(mdp, tol=1e-12)
    assert np.allclose(policy_evaluation(mdp, sigma).values, v.values, atol=1e-10)


def test_deterministic_one_state_evaluation():
    mdp = one_state_mdp(payoff=3.0, discount=0.25)
    assert policy_evaluation(mdp, np.array([[1.0]])).values[0] == pytest.approx(4.0)


def test_policy_evaluation_matches_monte_carlo():
    from berknash.examples.random_instances import random_mdp
    rng = np.random.default_rng(8)
    mdp = random_mdp(rng, 3, 2, discount=0.5)
    sigma = random_strategy(rng, mdp.feasible)
    v = policy_evaluation(mdp, sigma).values
    # discounted returns from state 0, truncated at 40 periods (tail below 0.5^40)
    n = 100_000
    sim = np.random.default_rng(0)
    s = np.zeros(n, int)
    total = np.zeros(n)
    cum_sigma = np.cumsum(sigma, axis=1)
    cum_k = np.cumsum(mdp.kernel, axis=2)
    for t in range(40):
        x = (sim.random(n)[:, None] > cum_sigma[s]).sum(axis=1)
        nxt = (sim.random(n)[:, None] > cum_k[s, x]).sum(axis=1)
        total += mdp.discount ** t * mdp.payoff[s, x, nxt]
        s = nxt
    se = total.std() / np.sqrt(n)
    assert abs(total.mean() - v[0]) <= 3 * se


def test_discount_one_is_rejected():
    mdp = one_state_mdp(discount=0.5)
    bad = FiniteMdp(mdp.states, mdp.actions, mdp.feasible, mdp.q0, mdp.kernel, mdp.payoff, 1.0)
    with pytest.raises(ValueError):
        value_iteration(bad)


@given(random_mdps(), seeds)
def test_perturbed_value_dominates_forced_strategies(mdp, seed):
    eps = 0.5 / (mdp.n_actions + 1)
    v = perturbed_value_iteration(mdp, eps, tol=1e-12).values
    sigma = perturb_strategy(random_strategy(np.random.default_rng(seed), mdp.feasible), mdp.feasible, eps)
    assert np.all(policy_evaluation(mdp, sigma).values <= v + 1e-9)


def test_monopoly_subjective_mdp_solves():
    smdp = monopoly_build(MonopolyParams(grid_points=5))
    for i in range(smdp.n_theta):
        v = value_iteration(smdp.subjective_mdp(smdp.family[i]))
        assert np.all(np.isfinite(v.values))
