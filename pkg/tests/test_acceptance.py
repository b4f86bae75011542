"""Acceptance criteria 1-9, each at its stated tolerance and runtime budget.

Every test records one line in the "acceptance criteria" section of the
terminal summary.
"""

import itertools
import time

import numpy as np
import pytest

from berknash.chain import stationarity_residual, stationary_outcomes
from berknash.divergence import minimizer_set, strong_identification
from berknash.equilibrium import (SearchConfig, Tolerances, continuous_minimizer, delta_bar,
                                  find_equilibria, is_perfect, perfect_equilibria, verify)
from berknash.examples.coin import coin_build
from berknash.examples.experimentation import (INIT, O, S, belief_value_init, experimentation_build,
                                               value_of_option_experimentation)
from berknash.examples.growth import GrowthParams, fraction_strategy, growth_build, growth_oracle, beta_hat
from berknash.examples.monopoly import MonopolyParams, monopoly_build, monopoly_oracle, perceived_gain
from berknash.examples.random_instances import random_correct_smdp, random_misspecified_smdp
from berknash.examples.search import (random_params, search_build, search_oracle, strategy_cell,
                                      threshold_cell, threshold_strategy)
from berknash.learning import (BeliefGrid, concentration_diagnostic, detect_stability, simulate,
                               simulate_many, solve_belief_mdp, stable_certificate, value_of_experimentation)
from berknash.mdp import is_optimal, optimal_action_sets
from berknash.model import mixture_kernel, point_mass, pure_strategy


# ---------------------------------------------------------------- 1


def _true_index(smdp):
    hits = [i for i in range(smdp.n_theta) if np.array_equal(smdp.family[i], smdp.base.kernel)]
    # one-state instances have identical kernels everywhere; any hit is the truth
    return hits[0]


def test_criterion_1_correct_specification_equivalence(criteria):
    start = time.perf_counter()
    rng = np.random.default_rng(123)
    found_ok = converse_ok = identified = nonempty = True
    worst = 0.0
    for _ in range(50):
        smdp = random_correct_smdp(rng)
        truth = _true_index(smdp)
        mdp = smdp.base
        certs = find_equilibria(smdp, SearchConfig(restarts=4))
        nonempty &= len(certs) > 0
        for c in certs:
            ok, shortfall = is_optimal(mdp, c.sigma)
            found_ok &= bool(ok and c.accepted)
            worst = max(worst, shortfall, c.residual_optimality, c.residual_belief, c.residual_stationarity)
        sets = optimal_action_sets(mdp)
        for choice in itertools.product(*[sets.actions(s) for s in range(mdp.n_states)]):
            sigma = pure_strategy(mdp, choice)
            for m in stationary_outcomes(mdp, sigma):
                profile = minimizer_set(smdp, m)
                identified &= strong_identification(smdp, m, profile)
                cert = verify(smdp, sigma, m, point_mass(smdp.n_theta, truth))
                converse_ok &= cert.accepted
                worst = max(worst, cert.residual_optimality, cert.residual_belief, cert.residual_stationarity)
    elapsed = time.perf_counter() - start
    checks = {"found equilibria optimal under the truth": found_ok,
              "optimal strategies verify": converse_ok,
              "instances strongly identified": identified,
              "search found an equilibrium on every instance": nonempty,
              "residuals <= 1e-7": worst <= 1e-7}
    assert criteria.record(1, checks, elapsed, 60, f"worst residual {worst:.1e}")


# ---------------------------------------------------------------- 2


def test_criterion_2_monopoly_regimes(criteria):
    start = time.perf_counter()
    config = SearchConfig(restarts=2)
    base = MonopolyParams()
    out = {}
    for ratio in (1.30, 1.40, 1.55):
        p = base.with_ratio(ratio)
        out[ratio] = (p, perfect_equilibria(monopoly_build(p), config))
    p140, perfect140 = out[1.40]
    oracle = monopoly_oracle(p140)
    smdp140 = monopoly_build(p140)
    unrefined = find_equilibria(smdp140, config)
    pure = {int(round(c.sigma[0, 1])): c for c in unrefined
            if np.all(np.isin(c.sigma, (0.0, 1.0)))}
    elapsed = time.perf_counter() - start

    def single(ratio):
        certs = out[ratio][1]
        return [float(c.sigma[0, 1]) for c in certs] if certs else []

    checks = {
        "H/L=1.30 gives sigma_H=0": single(1.30) == [0.0],
        "H/L=1.40 gives the interior sigma*": len(single(1.40)) == 1 and abs(single(1.40)[0] - oracle.sigma_star) <= 1e-4,
        "H/L=1.55 gives sigma_H=1": single(1.55) == [1.0],
        "both pure equilibria found unrefined": set(pure) == {0, 1},
        "pure equilibria rejected by perfection": all(not is_perfect(smdp140, c, config) for c in pure.values())
        and all(min(abs(s - 0.0), abs(s - 1.0)) > 1e-4 for s in single(1.40)),
    }
    assert criteria.record(2, checks, elapsed, 10, f"sigma*={oracle.sigma_star:.6f}, found {single(1.40)}")


# ---------------------------------------------------------------- 3


def test_criterion_3_monopoly_monotonicity(criteria):
    start = time.perf_counter()
    p = MonopolyParams()
    smdp = monopoly_build(p)
    grid = np.linspace(0.0, 1.0, 101)
    oracle_gain = np.array([perceived_gain(p, s) for s in grid])
    # the same map through the solver modules: stationary outcomes, then the off-grid divergence minimizer.
    # At sigma_H in {0, 1} one price is never charged and its parameter is unidentified, so the
    # solver route covers the 99 interior points.
    solver_gain = []
    for s in grid[1:-1]:
        sigma = np.array([[1 - s, s], [1 - s, s]])
        m = stationary_outcomes(smdp.base, sigma)[0]
        theta, _ = continuous_minimizer(smdp, m, start=[0.7, 0.5])
        solver_gain.append(p.H * theta[1] - p.L * theta[0])
    solver_gain = np.array(solver_gain)
    elapsed = time.perf_counter() - start
    checks = {"oracle strictly decreasing": bool(np.all(np.diff(oracle_gain) < 0)),
              "solver route strictly decreasing": bool(np.all(np.diff(solver_gain) < 0)),
              "routes agree within 1e-6": float(np.max(np.abs(solver_gain - oracle_gain[1:-1]))) <= 1e-6}
    assert criteria.record(3, checks, elapsed, 1.0)


# ---------------------------------------------------------------- 4


def test_criterion_4_search_ordering(criteria):
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    oracle_order = solver_order = cell_gap = claim_d = True
    worst_gap = 0
    worst_claim = 0.0
    for _ in range(20):
        p = random_params(rng)
        assert p.cov < 0
        o = search_oracle(p)
        w_star, w_m, theta_m = o.w_star, o.w_M, o.theta_M
        oracle_order &= theta_m < p.lbar and w_m < w_star
        smdp = search_build(p)
        config = SearchConfig(restarts=0, pure_starts=False,
                              initial=((threshold_strategy(p, w_star), None, np.full(smdp.n_theta, 1 / smdp.n_theta)),))
        certs = find_equilibria(smdp, config)
        if not certs:
            solver_order = cell_gap = False
            continue
        c = certs[0]
        theta_solver, _ = continuous_minimizer(c.model, c.m)
        cell = strategy_cell(c.sigma)
        solver_order &= bool(theta_solver[0] < p.lbar and cell <= threshold_cell(p, w_star))
        gap = abs(cell - threshold_cell(p, w_m))
        worst_gap = max(worst_gap, gap)
        cell_gap &= gap <= 1
        # stationary no-offer-or-reject share under the w* threshold, from the chain module
        m = stationary_outcomes(smdp.base, threshold_strategy(p, w_star))[0]
        err = abs(float(m[:, 0].sum()) - o.m_x0_of_w(w_star))
        worst_claim = max(worst_claim, err)
        claim_d &= err <= 1e-8
    elapsed = time.perf_counter() - start
    checks = {"oracle: theta^M < lambda_bar and w^M < w*": oracle_order,
              "solver: theta^M < lambda_bar and w^M < w*": solver_order,
              "solver within one wage cell of oracle": cell_gap,
              "rejection share matches chain within 1e-8": claim_d}
    assert criteria.record(4, checks, elapsed, 60, f"worst cell gap {worst_gap}, worst share error {worst_claim:.1e}")


# ---------------------------------------------------------------- 5


def test_criterion_5_growth_bias(criteria):
    start = time.perf_counter()
    p = GrowthParams()
    beta_pos = growth_oracle(p).beta_M()
    beta_neg = growth_oracle(GrowthParams(gamma=-0.5)).beta_M()
    boundary = [abs(beta_hat(p, growth_oracle(p).A(b)) - p.beta) for b in (0.0, 1.0 / p.delta)]

    smdp = growth_build(p)
    sigma = fraction_strategy(p, (0, 0))
    m = stationary_outcomes(smdp.base, sigma)[0]
    # zero investment carries no information on the elasticity; one closest parameter must support it
    profile = minimizer_set(smdp, m)
    certs = [verify(smdp, sigma, m, point_mass(smdp.n_theta, i)) for i in profile.minimizer_set]
    cert = next((c for c in certs if c.accepted), certs[0])
    perfect = is_perfect(smdp, cert, SearchConfig(restarts=0))
    elapsed = time.perf_counter() - start
    checks = {"gamma>0: beta^M in (0, beta*)": 0 < beta_pos < p.beta,
              "gamma<0: beta^M > beta*": beta_neg > p.beta,
              "boundary beta_hat = beta* within 1e-9": max(boundary) <= 1e-9,
              "zero-investment equilibrium exists": cert.accepted,
              "zero-investment equilibrium not perfect": not perfect}
    assert criteria.record(5, checks, elapsed, 120,
                           f"beta^M={beta_pos:.5f} (gamma=.5), {beta_neg:.5f} (gamma=-.5)")


# ---------------------------------------------------------------- 6

MU_ALL = [round(0.1 * k, 1) for k in range(11)]
MU_INSIDE = [mu for mu in MU_ALL if 2 / 9 <= mu <= 7 / 9]
MU_OUTSIDE = [mu for mu in MU_ALL if mu not in MU_INSIDE]


@pytest.fixture(scope="module")
def experimentation_values():
    smdp = experimentation_build(0.9)
    return smdp, solve_belief_mdp(smdp, BeliefGrid.regular(2, 30))


def _value_exp(smdp, values, mu):
    return value_of_experimentation(smdp, values, INIT, O, np.array([1 - mu, mu]))


def test_criterion_6_experimentation(criteria, experimentation_values):
    start = time.perf_counter()
    smdp, values = experimentation_values
    inside = max(abs(_value_exp(smdp, values, mu) - (2 / 3 - 6 * mu * (1 - mu))) for mu in MU_INSIDE)
    everywhere = max(abs(_value_exp(smdp, values, mu) - (2 / 3 - 6 * mu * (1 - mu))) for mu in MU_ALL)
    closed_form = max(abs(_value_exp(smdp, values, mu) - value_of_option_experimentation(mu)) for mu in MU_ALL)
    w_err = max(abs(values.value(INIT, np.array([1 - mu, mu])) - belief_value_init(mu, 0.9)) for mu in MU_ALL)
    # fixed-belief scan: S is never in the optimal set at any belief
    s_optimal = False
    for mu in np.linspace(0.0, 1.0, 1001):
        sets = optimal_action_sets(smdp.subjective_mdp(mixture_kernel(smdp, np.array([1 - mu, mu]))))
        s_optimal |= bool(sets.mask[INIT, S])
    picks_s = stable_nonexhaustive = True
    for mu0 in np.linspace(1 / 3, 2 / 3, 7):
        trace = simulate(smdp, np.array([1 - mu0, mu0]), "belief-optimal", 1000, seed=0,
                         grid_resolution=30)
        picks_s &= trace.sigma(0)[INIT, S] > 0 and (0.35 < mu0 < 0.65) <= (trace.actions[0] == S)
        verdict = detect_stability(trace)
        # at mu0 = 1/3 and 2/3 the agent is indifferent between S and a bet; only S leaves learning incomplete
        stable_nonexhaustive &= verdict.stable and (trace.actions[0] != S or verdict.exhaustive is False)
    elapsed = time.perf_counter() - start
    checks = {"ValueExp(O) = 2/3 - 6mu(1-mu) on [2/9, 7/9] within 1e-9": inside <= 1e-9,
              "ValueExp(O) matches its exact closed form at all 11 mu": closed_form <= 1e-9,
              "W(init, mu) matches max{1-mu, mu, 2/3, -1/3+2delta/3}": w_err <= 1e-9,
              "S never optimal under fixed beliefs": not s_optimal,
              "belief-optimal agent picks S at t=0": picks_s,
              "stable with exhaustive flag false": stable_nonexhaustive}
    note = (f"ValueExp = 2/3-6mu(1-mu) holds at {len(MU_INSIDE)}/11 grid points only "
            f"(max error {everywhere:.3f} outside [2/9, 7/9]); the all-11 claim is a strict xfail")
    assert criteria.record(6, checks, elapsed, 10, note)


@pytest.mark.xfail(strict=True, reason="2/3 - 6mu(1-mu) assumes the risky bet is optimal after O, "
                                       "which holds only for mu in [2/9, 7/9]")
@pytest.mark.parametrize("mu", MU_OUTSIDE)
def test_criterion_6_value_of_experimentation_formula_outside_range(experimentation_values, mu):
    smdp, values = experimentation_values
    assert abs(_value_exp(smdp, values, mu) - (2 / 3 - 6 * mu * (1 - mu))) <= 1e-9


# ---------------------------------------------------------------- 7


def test_criterion_7_concentration(criteria):
    start = time.perf_counter()
    p = MonopolyParams(delta=0.0, grid_points=21)
    smdp = monopoly_build(p)
    prior = np.full(smdp.n_theta, 1 / smdp.n_theta)
    traces = simulate_many(smdp, prior, "certainty-equivalent", 100_000, range(50))
    masses = [concentration_diagnostic(tr)[-1].mass for tr in traces]
    concentrated = sum(m > 0.99 for m in masses)

    coin = coin_build(0.5, (0.25, 0.75))
    coin_traces = simulate_many(coin, np.array([0.5, 0.5]), "myopic", 100_000, range(20))
    set_mass, swings = [], []
    for tr in coin_traces:
        set_mass.append(concentration_diagnostic(tr, eta=0.0)[-1].mass)
        last_decade = tr.checkpoint_beliefs[tr.checkpoints >= 10_000]
        swings.append(float(np.max(last_decade.max(axis=0) - last_decade.min(axis=0))))
    oscillating = sum(s > 0.2 for s in swings)
    elapsed = time.perf_counter() - start
    checks = {"monopoly: mass > 0.99 in >= 45/50 seeds": concentrated >= 45,
              "coin: set mass -> 1": min(set_mass) >= 1 - 1e-12,
              "coin: per-atom oscillation > 0.2 over the last decade in most seeds": oscillating > len(swings) / 2}
    assert criteria.record(7, checks, elapsed, 180,
                           f"monopoly {concentrated}/50 seeds; coin oscillation in {oscillating}/20 seeds")


# ---------------------------------------------------------------- 8


def test_criterion_8_stable_implies_equilibrium(criteria):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    tols = Tolerances(optimality=1e-4, belief=1e-4, stationarity=5e-3)
    stable = verified = 0
    for _ in range(10):
        smdp = random_misspecified_smdp(rng)
        smdp = smdp.with_discount(0.5 * delta_bar(smdp))
        prior = np.full(smdp.n_theta, 1 / smdp.n_theta)
        for trace in simulate_many(smdp, prior, "belief-optimal", 100_000, range(3)):
            verdict = detect_stability(trace)
            if verdict.stable:
                stable += 1
                verified += stable_certificate(smdp, verdict, tols).accepted
    elapsed = time.perf_counter() - start
    checks = {"every stable verdict verifies": verified == stable,
              "some verdicts are stable": stable > 0}
    assert criteria.record(8, checks, elapsed, 300, f"{verified}/{stable} stable verdicts verified (30 runs)")


# ---------------------------------------------------------------- 9


def test_criterion_9_invariant_suites(criteria):
    from invariants import run_invariant_suites

    start = time.perf_counter()
    violations = run_invariant_suites(np.random.default_rng(99))
    elapsed = time.perf_counter() - start
    checks = {f"{name}: {count} violation(s)": count == 0 for name, count in violations.items()}
    assert criteria.record(9, checks, elapsed, 120, f"{len(violations)} suites")
