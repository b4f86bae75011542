"""Berk-Nash equilibria: verification, search, refinements and the discount bound.

A candidate is a triple ``(sigma, m, mu)``: a strategy, an outcome distribution
and a belief over the parameter grid.  ``verify`` reports three residuals:

* optimality: worst Q-value shortfall of a supported action under the mixture
  kernel of ``mu``;
* belief: mass of ``mu`` outside the closest-parameter set of ``m``;
* stationarity: ``||m - M_{sigma,Q}[m]||_inf``.

The search is a damped smoothed-best-response iteration.  On a finite grid an
interior equilibrium usually needs the closest parameter to sit exactly where the
agent is indifferent, so a polishing step solves for that point on the
continuous family (through ``kernel_fn``) and appends it to the grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize

from .chain import full_communication, nearest_stationary, stationarity_residual
from .divergence import (
    DEFAULT_TOL_K,
    NoFiniteDivergence,
    continuous_divergence,
    minimizer_set,
    weak_identification,
    wkld_values,
)
from .mdp import bellman_q, optimality_shortfall, policy_iteration
from .model import (
    FiniteSmdp,
    augment_grid,
    count_pure_strategies,
    find_theta,
    mixture_kernel,
    pad_belief,
    perturb_strategy,
    point_mass,
    pure_strategies,
)
from .parallel import array_digest, run_jobs

EPSILON_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 1e-6)
DEDUP_DISTANCE = 1e-6
LIMIT_STEP = 1e-4
SUPPORT_SLACK = 1e-9      # mass this close to the floor counts as unsupported
PURIFY_BELOW = 1e-6


@dataclass(frozen=True)
class Tolerances:
    optimality: float = 1e-7
    belief: float = 1e-7
    stationarity: float = 1e-9
    tol_k: float = DEFAULT_TOL_K
    tol_opt: float = 1e-9
    exhaustive: float = 1e-9
    vi: float = 1e-12


@dataclass(frozen=True, eq=False)
class EquilibriumCertificate:
    """A verified (or rejected) candidate with its residuals.

    ``model`` is the SMDP the belief lives on; it can be the input model with
    extra grid points appended by the polishing step.
    """

    sigma: np.ndarray
    m: np.ndarray
    mu: np.ndarray
    residual_optimality: float
    residual_belief: float
    residual_stationarity: float
    exhaustive_learning: bool
    epsilon: float
    tolerances: Tolerances
    model: FiniteSmdp = field(repr=False)

    @property
    def accepted(self) -> bool:
        t = self.tolerances
        return (self.residual_optimality <= t.optimality and self.residual_belief <= t.belief
                and self.residual_stationarity <= t.stationarity)

    @property
    def theta_grid(self) -> np.ndarray:
        return self.model.theta_grid

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mu > 0)

    def distance(self, other) -> float:
        """Sup-norm distance between the ``(sigma, m)`` parts."""
        return max(float(np.max(np.abs(self.sigma - other.sigma))), float(np.max(np.abs(self.m - other.m))))

    def to_record(self) -> str:
        t = self.tolerances
        supp = self.support()
        lines = [
            f"accepted = {self.accepted}",
            f"epsilon = {self.epsilon!r}",
            f"residual_optimality = {self.residual_optimality!r}",
            f"residual_belief = {self.residual_belief!r}",
            f"residual_stationarity = {self.residual_stationarity!r}",
            f"tol_optimality = {t.optimality!r}",
            f"tol_belief = {t.belief!r}",
            f"tol_stationarity = {t.stationarity!r}",
            f"tol_k = {t.tol_k!r}",
            f"exhaustive_learning = {self.exhaustive_learning}",
            "belief_support = " + "; ".join(
                f"{','.join(repr(float(v)) for v in self.theta_grid[i])}:{float(self.mu[i])!r}" for i in supp),
        ]
        return "\n".join(lines)


# ---------------------------------------------------------------- verification


def _q_under_belief(smdp: FiniteSmdp, mu, epsilon: float, tol: float) -> np.ndarray:
    mdp_mu = smdp.subjective_mdp(mixture_kernel(smdp, mu))
    return bellman_q(mdp_mu, policy_iteration(mdp_mu, epsilon).values)


def exhaustive_learning_check(smdp: FiniteSmdp, mu, tol: float = 1e-9) -> bool:
    """Whether Bayes' rule leaves ``mu`` unchanged after every subjectively possible transition.

    On a finite grid this holds exactly when every atom of ``mu`` assigns the same
    probability to each transition the mixture deems possible.
    """
    mu = np.asarray(mu, dtype=float)
    supp = np.flatnonzero(mu > 0)
    if supp.size <= 1:
        return True
    fam = smdp.family[supp]
    qbar = np.tensordot(mu[supp] / mu[supp].sum(), fam, axes=(0, 0))
    relevant = (qbar > tol) & smdp.base.feasible[:, :, None]
    spread = fam.max(axis=0) - fam.min(axis=0)
    return bool(np.all(spread[relevant] <= tol))


def verify(smdp: FiniteSmdp, sigma, m, mu, tols: Optional[Tolerances] = None,
           epsilon: float = 0.0) -> EquilibriumCertificate:
    """Residuals of the three equilibrium conditions; never raises on a bad candidate.

    With ``epsilon > 0`` optimality is judged within the perturbed strategy set:
    only mass above the ``epsilon`` floor must sit on optimal actions, and the
    Q-values account for the forced experimentation in future periods.
    """
    tols = tols or Tolerances()
    sigma = np.asarray(sigma, dtype=float)
    m = np.asarray(m, dtype=float)
    mu = pad_belief(mu, smdp.n_theta)
    base = smdp.base

    q = _q_under_belief(smdp, mu, epsilon, tols.vi)
    floor = epsilon + SUPPORT_SLACK if epsilon > 0 else 0.0
    res_opt = optimality_shortfall(q, sigma, floor)
    # a strategy outside the admissible set is never optimal
    res_opt = max(res_opt, float(np.max(np.abs(sigma.sum(axis=1) - 1.0))),
                  float(np.max(np.abs(sigma[~base.feasible]), initial=0.0)))
    if epsilon > 0:
        res_opt = max(res_opt, float(epsilon - sigma[base.feasible].min()) - 1e-12)
    else:
        res_opt = max(res_opt, float(-sigma.min()))

    try:
        profile = minimizer_set(smdp, m, tols.tol_k)
        res_belief = float(mu[~profile.mask()].sum())
    except NoFiniteDivergence:
        res_belief = float(mu.sum())
    res_belief = max(res_belief, abs(float(mu.sum()) - 1.0), float(-mu.min()))

    res_stat = stationarity_residual(base, sigma, m)
    return EquilibriumCertificate(sigma.copy(), m.copy(), mu, max(res_opt, 0.0), res_belief, res_stat,
                                  exhaustive_learning_check(smdp, mu, tols.exhaustive), float(epsilon),
                                  tols, smdp)


# ---------------------------------------------------------------- best response map


def _softmax_strategy(q: np.ndarray, feasible: np.ndarray, temperature: float, tol_opt: float) -> np.ndarray:
    if temperature <= 0:
        best = q.max(axis=1, keepdims=True)
        w = (feasible & (q >= best - tol_opt)).astype(float)
    else:
        z = np.where(feasible, (q - q.max(axis=1, keepdims=True)) / temperature, -np.inf)
        w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def _restrict_belief(mu, mask) -> np.ndarray:
    overlap = float(mu[mask].sum())
    if overlap < 1e-12:
        return mask / mask.sum()
    return np.where(mask, mu, 0.0) / overlap


def best_response_map(smdp: FiniteSmdp, sigma, m, mu, temperature: float, tols: Optional[Tolerances] = None,
                      epsilon: float = 0.0):
    """One application of the equilibrium correspondence, with fixed selection rules.

    Returns ``(sigma', m', mu')``: a softmax (or uniform over the optimal set at
    temperature 0) best response to ``mu``, the stationary extreme of ``sigma``
    nearest to ``m``, and ``mu`` renormalized onto the closest-parameter set of ``m``.
    """
    if temperature < 0:
        raise ValueError("temperature must be nonnegative")
    tols = tols or Tolerances()
    mu = pad_belief(mu, smdp.n_theta)
    feasible = smdp.base.feasible
    q = _q_under_belief(smdp, mu, epsilon, tols.vi)
    sigma_next = perturb_strategy(_softmax_strategy(q, feasible, temperature, tols.tol_opt), feasible, epsilon)
    m_next = nearest_stationary(smdp.base, sigma, m)
    try:
        mask = minimizer_set(smdp, m, tols.tol_k).mask()
        mu_next = _restrict_belief(mu, mask)
    except NoFiniteDivergence:
        mu_next = mu.copy()
    return sigma_next, m_next, mu_next


# ---------------------------------------------------------------- search


@dataclass(frozen=True)
class SearchConfig:
    """Settings for ``find_equilibria`` and the refinements built on it.

    ``temperature`` is relative to the payoff scale ``M / (1 - delta)`` and decays
    geometrically each iteration; below ``1e-9`` it is treated as zero.
    ``initial`` holds extra ``(sigma, m, mu)`` starting triples.
    """

    restarts: int = 8
    damping: float = 0.1
    temperature: float = 0.05
    temperature_decay: float = 0.9
    max_iterations: int = 120
    check_every: int = 10
    seed: int = 0
    pure_start_limit: int = 256
    pure_starts: bool = True
    max_point_masses: int = 64
    refine: bool = True
    tolerances: Tolerances = Tolerances()
    threads: Optional[int] = None
    initial: tuple = ()


def _unperturb(sigma, feasible, epsilon):
    if epsilon <= 0:
        return sigma
    k = feasible.sum(axis=1, keepdims=True)
    return np.where(feasible, (sigma - epsilon) / (1.0 - k * epsilon), 0.0).clip(0.0)


def _purify(sigma, feasible, epsilon):
    base = _unperturb(sigma, feasible, epsilon)
    pure = np.where(base < PURIFY_BELOW, 0.0, base)
    pure = pure / pure.sum(axis=1, keepdims=True)
    return perturb_strategy(pure, feasible, epsilon)


def _sample_members(members, weights, cap):
    if members.size > cap:
        picks = np.unique(np.round(np.linspace(0, members.size - 1, cap)).astype(int))
        members = members[picks]
    order = np.argsort(-weights[members], kind="stable")
    return members[order]


def _certify(smdp, sigma, m, mu, epsilon, config) -> Optional[EquilibriumCertificate]:
    """Try to complete ``(sigma, m, mu)`` into an accepted certificate."""
    tols = config.tolerances
    feasible = smdp.base.feasible
    strategies = [_purify(sigma, feasible, epsilon),
                  perturb_strategy(_pure_response(smdp, mu, epsilon, tols), feasible, epsilon), sigma]
    strategies = [s for i, s in enumerate(strategies)
                  if all(np.max(np.abs(s - t)) > 0 for t in strategies[:i])]
    for s in strategies:
        m_s = nearest_stationary(smdp.base, s, m)
        try:
            profile = minimizer_set(smdp, m_s, tols.tol_k)
        except NoFiniteDivergence:
            continue
        mask = profile.mask()
        members = profile.minimizer_set
        beliefs = [point_mass(smdp.n_theta, i)
                   for i in _sample_members(members, np.where(mask, mu, 0.0), config.max_point_masses)]
        if members.size > 1:
            beliefs.append(_restrict_belief(mu, mask))
            beliefs.append(mask / mask.sum())
        for b in beliefs:
            cert = verify(smdp, s, m_s, b, tols, epsilon)
            if cert.accepted:
                return cert
    return None


def _switch_states(a, b):
    return np.flatnonzero(np.any(np.abs(a - b) > 0, axis=1))


def _tie_gap(q, a, b, states) -> float:
    """Mean Q advantage of ``b``'s actions over ``a``'s at the states where they differ."""
    xa = np.argmax(a[states], axis=1)
    xb = np.argmax(b[states], axis=1)
    return float(np.mean(q[states, xb] - q[states, xa]))


def _bisect(fn, lo, hi, iters=60):
    f_lo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid == 0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _pure_response(smdp, mu, epsilon, tols):
    q = _q_under_belief(smdp, mu, epsilon, tols.vi)
    best = q.max(axis=1, keepdims=True)
    sets = smdp.base.feasible & (q >= best - tols.tol_opt)
    sigma = np.zeros(q.shape)
    sigma[np.arange(q.shape[0]), np.argmax(sets, axis=1)] = 1.0
    return sigma


def _switch_polish(smdp, sigma, m, mu, epsilon, config) -> Optional[EquilibriumCertificate]:
    """Mix the best responses to the two heaviest atoms so both atoms stay closest, then tie them."""
    tols = config.tolerances
    feasible = smdp.base.feasible
    mu = pad_belief(mu, smdp.n_theta)
    top = np.argsort(-mu, kind="stable")[:2]
    if top.size < 2 or mu[top[1]] <= 1e-9:
        return None
    i_a, i_b = int(top[0]), int(top[1])
    br_a = _pure_response(smdp, point_mass(smdp.n_theta, i_a), epsilon, tols)
    br_b = _pure_response(smdp, point_mass(smdp.n_theta, i_b), epsilon, tols)
    states = _switch_states(br_a, br_b)
    if states.size == 0:
        return None

    def strat(p):
        return perturb_strategy((1 - p) * br_a + p * br_b, feasible, epsilon)

    def k_gap(p):
        vals = wkld_values(smdp, nearest_stationary(smdp.base, strat(p), m))
        return vals[i_a] - vals[i_b]

    if not np.isfinite(k_gap(0.0)) or not np.isfinite(k_gap(1.0)) or np.sign(k_gap(0.0)) == np.sign(k_gap(1.0)):
        return None
    p = _bisect(k_gap, 0.0, 1.0)
    s = strat(p)
    m_s = nearest_stationary(smdp.base, s, m)

    def belief(w):
        return (1 - w) * point_mass(smdp.n_theta, i_a) + w * point_mass(smdp.n_theta, i_b)

    def q_gap(w):
        return _tie_gap(_q_under_belief(smdp, belief(w), epsilon, tols.vi), br_a, br_b, states)

    if np.sign(q_gap(0.0)) == np.sign(q_gap(1.0)):
        return None
    cert = verify(smdp, s, m_s, belief(_bisect(q_gap, 0.0, 1.0)), tols, epsilon)
    return cert if cert.accepted else None


def continuous_minimizer(smdp: FiniteSmdp, m, start=None):
    """Off-grid minimizer of ``K(m, .)`` over the parameter box, started at the best grid point."""
    values = wkld_values(smdp, m)
    i0 = int(np.argmin(values))
    x0 = smdp.theta_grid[i0] if start is None else np.asarray(start, dtype=float)
    if smdp.theta_bounds is None:
        return smdp.theta_grid[i0].copy(), float(values[i0])
    lo, hi = smdp.theta_bounds[:, 0], smdp.theta_bounds[:, 1]
    pad = 1e-9 * np.maximum(hi - lo, 1.0)
    bounds = list(zip(lo + pad, hi - pad))
    x0 = np.clip(x0, lo + pad, hi - pad)

    def objective(t):
        v = continuous_divergence(smdp, m, t)
        return v if math.isfinite(v) else 1e300

    best_x, best_v = smdp.theta_grid[i0].copy(), float(values[i0])
    res = minimize(objective, x0, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000})
    if res.fun < best_v:
        best_x, best_v = np.asarray(res.x, dtype=float), float(res.fun)
    return best_x, best_v


def refine_certificate(smdp: FiniteSmdp, sigma_a, sigma_b, m, epsilon: float = 0.0,
                       config: Optional["SearchConfig"] = None) -> Optional[EquilibriumCertificate]:
    """Exact equilibrium between two pure strategies using the continuous family.

    Along ``sigma(p) = (1 - p) sigma_a + p sigma_b`` the closest parameter is
    computed off-grid; ``p`` is chosen so the agent is indifferent at that
    parameter, and the parameter is appended to the grid to support a point-mass
    belief.  Returns None without ``kernel_fn`` or when no candidate verifies.
    """
    if smdp.kernel_fn is None:
        return None
    config = config or SearchConfig()
    tols = config.tolerances
    feasible = smdp.base.feasible
    states = _switch_states(sigma_a, sigma_b)
    if states.size == 0:
        return None

    def strat(p):
        return perturb_strategy((1 - p) * sigma_a + p * sigma_b, feasible, epsilon)

    cache = {}

    def theta_at(p):
        if p not in cache:
            m_p = nearest_stationary(smdp.base, strat(p), m)
            cache[p] = (continuous_minimizer(smdp, m_p)[0], m_p)
        return cache[p]

    def gap(p):
        theta, _ = theta_at(p)
        mdp_t = smdp.subjective_mdp(smdp.kernel_fn(theta))
        return _tie_gap(bellman_q(mdp_t, policy_iteration(mdp_t, epsilon).values), sigma_a, sigma_b, states)

    # the closest parameter can jump where a pair loses all its mass, so bracket
    # roots on interior points only and keep the pure endpoints as fallbacks
    nodes = np.concatenate([[1e-7], np.linspace(0.0, 1.0, 9)[1:-1], [1 - 1e-7]])
    values = [gap(float(p)) for p in nodes]
    ps = []
    for lo, hi, g_lo, g_hi in zip(nodes[:-1], nodes[1:], values[:-1], values[1:]):
        if g_lo == 0:
            ps.append(float(lo))
        elif np.sign(g_lo) != np.sign(g_hi):
            ps.append(brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    ps += [0.0, 1.0]
    for p in ps:
        theta, m_p = theta_at(p)
        aug = augment_grid(smdp, theta)
        if aug.theta_bounds is not None:
            theta = np.clip(theta, aug.theta_bounds[:, 0], aug.theta_bounds[:, 1])
        i = find_theta(aug, theta, 1e-14)
        if i < 0:
            continue
        cert = verify(aug, strat(p), m_p, point_mass(aug.n_theta, i), tols, epsilon)
        if cert.accepted:
            return cert
    return None


def _switch_pairs(smdp, sigma, mu, epsilon, tols):
    """Pure strategy pairs worth trying in ``refine_certificate``."""
    feasible = smdp.base.feasible
    pairs = []
    top = np.argsort(-pad_belief(mu, smdp.n_theta), kind="stable")[:2]
    if top.size == 2:
        pairs.append((_pure_response(smdp, point_mass(smdp.n_theta, int(top[0])), epsilon, tols),
                      _pure_response(smdp, point_mass(smdp.n_theta, int(top[1])), epsilon, tols)))
    base = _unperturb(sigma, feasible, epsilon)
    order = np.argsort(-np.where(feasible, base, -1.0), axis=1, kind="stable")
    a = np.zeros(base.shape)
    a[np.arange(base.shape[0]), order[:, 0]] = 1.0
    second = base[np.arange(base.shape[0]), order[:, 1]] if base.shape[1] > 1 else np.zeros(base.shape[0])
    mixed = (second > 0.01) & (feasible.sum(axis=1) > 1)
    if mixed.any():
        b = a.copy()
        b[mixed] = 0.0
        b[np.flatnonzero(mixed), order[mixed, 1]] = 1.0
        pairs.append((a, b))
    unique = []
    for pa, pb in pairs:
        if _switch_states(pa, pb).size and not any(np.array_equal(pa, u[0]) and np.array_equal(pb, u[1])
                                                   for u in unique):
            unique.append((pa, pb))
    return unique


def _payoff_scale(smdp) -> float:
    base = smdp.base
    return max(base.max_abs_payoff, 1e-12) / (1.0 - base.discount)


def _run_start(smdp, start, epsilon, config, rng) -> Optional[EquilibriumCertificate]:
    tols = config.tolerances
    feasible = smdp.base.feasible
    sigma, m, mu = start
    sigma = perturb_strategy(np.asarray(sigma, dtype=float), feasible, epsilon) if epsilon > 0 else np.asarray(sigma, float)
    mu = pad_belief(mu, smdp.n_theta)
    m = nearest_stationary(smdp.base, sigma, m)
    scale = _payoff_scale(smdp)
    for k in range(config.max_iterations):
        if k % config.check_every == 0:
            cert = _certify(smdp, sigma, m, mu, epsilon, config)
            if cert is not None:
                return cert
        tau = config.temperature * scale * config.temperature_decay ** k
        if tau < 1e-9 * scale:
            tau = 0.0
        s2, m2, mu2 = best_response_map(smdp, sigma, m, mu, tau, tols, epsilon)
        a = max(config.damping, 1.0 / (k + 2))
        new_sigma = (1 - a) * sigma + a * s2
        change = float(np.max(np.abs(new_sigma - sigma)))
        sigma, m, mu = new_sigma, (1 - a) * m + a * m2, (1 - a) * mu + a * mu2
        if change < 1e-12 and tau == 0.0:
            break
    cert = _certify(smdp, sigma, m, mu, epsilon, config)
    if cert is not None:
        return cert
    cert = _switch_polish(smdp, sigma, m, mu, epsilon, config)
    if cert is not None:
        return cert
    if config.refine and smdp.kernel_fn is not None:
        for pa, pb in _switch_pairs(smdp, sigma, mu, epsilon, tols):
            cert = refine_certificate(smdp, pa, pb, m, epsilon, config)
            if cert is not None:
                return cert
    return None


def _random_start(smdp, rng):
    feasible = smdp.base.feasible
    sigma = np.where(feasible, rng.exponential(size=feasible.shape), 0.0)
    sigma /= sigma.sum(axis=1, keepdims=True)
    mu = rng.exponential(size=smdp.n_theta)
    return sigma, None, mu / mu.sum()


def _starts(smdp, config):
    starts = [tuple(s) for s in config.initial]
    if config.pure_starts and count_pure_strategies(smdp.base) <= config.pure_start_limit:
        uniform_mu = np.full(smdp.n_theta, 1.0 / smdp.n_theta)
        starts += [(s, None, uniform_mu) for s in pure_strategies(smdp.base)]
    seeds = np.random.SeedSequence([array_digest(smdp.base.kernel, smdp.base.payoff, smdp.theta_grid),
                                    config.seed]).spawn(len(starts) + config.restarts)
    rngs = [np.random.default_rng(s) for s in seeds]
    starts += [_random_start(smdp, rngs[len(starts) + i]) for i in range(config.restarts)]
    return list(zip(starts, rngs))


def _dedupe(certs):
    out = []
    for c in certs:
        if all(c.distance(o) >= DEDUP_DISTANCE for o in out):
            out.append(c)
    return out


def find_equilibria(smdp: FiniteSmdp, config: Optional[SearchConfig] = None,
                    epsilon: float = 0.0) -> list:
    """Accepted certificates from damped best-response runs over many starts.

    Starts are the configured initial triples, every pure strategy (when there
    are at most ``pure_start_limit``), and ``restarts`` random triples.  The
    search is heuristic: an empty result does not prove that no equilibrium exists.
    """
    config = config or SearchConfig()
    jobs = _starts(smdp, config)
    results = run_jobs(lambda job: _run_start(smdp, job[0], epsilon, config, job[1]), jobs, config.threads)
    return _dedupe([c for c in results if c is not None])


def _max_epsilon(smdp: FiniteSmdp) -> float:
    return 1.0 / (smdp.base.n_actions + 1)


def perturbed_equilibria(smdp: FiniteSmdp, epsilon: float, config: Optional[SearchConfig] = None) -> list:
    """Equilibria of the game where each feasible action gets probability at least ``epsilon``."""
    if not 0 < epsilon <= _max_epsilon(smdp) + 1e-15:
        raise ValueError(f"epsilon must lie in (0, 1/(|X|+1)] = (0, {_max_epsilon(smdp)}], got {epsilon}")
    return find_equilibria(smdp, config, epsilon)


# ---------------------------------------------------------------- perfection


def merge_models(smdp: FiniteSmdp, certs) -> tuple:
    """Bring certificates onto one common grid: ``smdp`` plus every point they appended."""
    merged = smdp
    for c in certs:
        if c.model.n_theta > smdp.n_theta:
            merged = augment_grid(merged, c.model.theta_grid[smdp.n_theta:])
    out = []
    for c in certs:
        mu = np.zeros(merged.n_theta)
        for i in np.flatnonzero(c.mu):
            j = i if i < smdp.n_theta else find_theta(merged, c.model.theta_grid[i], 1e-14)
            mu[j] += c.mu[i]
        out.append(replace(c, mu=mu, model=merged))
    return merged, out


def check_perfection_hypotheses(smdp: FiniteSmdp, samples: int = 5, seed: int = 0) -> list:
    """Spot checks of weak identification (at random full-support data) and full communication."""
    problems = []
    if not full_communication(smdp.base):
        problems.append("full communication fails")
    rng = np.random.default_rng(seed)
    feasible = smdp.base.feasible
    for _ in range(samples):
        m = np.where(feasible, rng.exponential(size=feasible.shape), 0.0)
        m /= m.sum()
        try:
            profile = minimizer_set(smdp, m)
        except NoFiniteDivergence:
            continue
        if not weak_identification(smdp, m, profile):
            problems.append("weak identification fails at a sampled outcome distribution")
            break
    return problems


def _extrapolate(c1, c2):
    """Linear extrapolation of ``sigma`` to epsilon = 0 from the last two ladder rungs."""
    e1, e2 = c1.epsilon, c2.epsilon
    sigma = c2.sigma + (c2.sigma - c1.sigma) * e2 / (e1 - e2)
    sigma = np.where(c2.model.base.feasible, sigma.clip(0.0), 0.0)
    return sigma / sigma.sum(axis=1, keepdims=True)


def _limit_certificate(chain, config) -> Optional[EquilibriumCertificate]:
    last = chain[-1]
    smdp = last.model
    feasible = smdp.base.feasible
    tols = config.tolerances
    candidates = []
    if len(chain) >= 2:
        candidates.append(_extrapolate(chain[-2], last))
    candidates.append(_unperturb(last.sigma, feasible, last.epsilon))
    for s in list(candidates):
        candidates.append(_purify(s, feasible, 0.0))
    for s in candidates:
        m = nearest_stationary(smdp.base, s, last.m)
        cert = verify(smdp, s, m, last.mu, tols)
        if cert.accepted and cert.exhaustive_learning:
            return cert
        cert = _certify(smdp, s, m, last.mu, 0.0, config)
        if cert is not None and cert.exhaustive_learning:
            return cert
    if config.refine and smdp.kernel_fn is not None:
        for pa, pb in _switch_pairs(smdp, candidates[0], last.mu, 0.0, tols):
            cert = refine_certificate(smdp, pa, pb, last.m, 0.0, config)
            if cert is not None and cert.exhaustive_learning:
                return cert
    return None


def _continuation_config(config: SearchConfig, starts) -> SearchConfig:
    return replace(config, restarts=0, pure_starts=False, initial=tuple(starts))


def perfect_equilibria(smdp: FiniteSmdp, config: Optional[SearchConfig] = None,
                       ladder=EPSILON_LADDER) -> list:
    """Limits of exhaustive-learning equilibria of perturbed games as the perturbation vanishes.

    A full search runs at the first rung; each later rung restarts from the
    previous rung's certificates and keeps the nearest one, so every chain follows
    one branch.  A chain whose last two rungs move less than ``1e-4`` is
    extrapolated to zero and the limit must verify unperturbed with exhaustive
    learning.
    """
    config = config or SearchConfig()
    for problem in check_perfection_hypotheses(smdp):
        warnings.warn(f"perfection hypotheses: {problem}; continuation may diverge", stacklevel=2)
    ladder = [e for e in ladder if e <= _max_epsilon(smdp) + 1e-15]
    first = [c for c in perturbed_equilibria(smdp, ladder[0], config) if c.exhaustive_learning]
    model, first = merge_models(smdp, first)
    chains = [[c] for c in first]
    for eps in ladder[1:]:
        if not chains:
            break
        starts = [(c[-1].sigma, c[-1].m, c[-1].mu) for c in chains]
        found = perturbed_equilibria(model, eps, _continuation_config(config, starts))
        model, found = merge_models(model, [c for c in found if c.exhaustive_learning])
        alive = []
        for chain in chains:
            if not found:
                continue
            nearest = min(found, key=chain[-1].distance)
            chain[-1:] = [replace(chain[-1], mu=pad_belief(chain[-1].mu, model.n_theta), model=model)]
            chain.append(nearest)
            alive.append(chain)
        chains = alive
    limits = []
    for chain in chains:
        if len(chain) >= 2 and chain[-1].distance(chain[-2]) >= LIMIT_STEP:
            continue
        cert = _limit_certificate(chain, config)
        if cert is not None:
            limits.append(cert)
    return _dedupe(limits)


def is_perfect(smdp: FiniteSmdp, candidate: EquilibriumCertificate, config: Optional[SearchConfig] = None,
               ladder=EPSILON_LADDER[2:7], radius: float = 1e-3) -> bool:
    """Whether perturbed equilibria continued from ``candidate`` stay within ``radius`` of it.

    At each rung the search starts from the perturbed candidate (or the previous
    rung's certificate) only; the candidate is rejected when no exhaustive-learning
    perturbed equilibrium is found or the branch ends farther than ``radius``.
    """
    config = config or SearchConfig()
    model = candidate.model if candidate.model.n_theta >= smdp.n_theta else smdp
    current = (candidate.sigma, candidate.m, pad_belief(candidate.mu, model.n_theta))
    last = None
    for eps in ladder:
        found = perturbed_equilibria(model, eps, _continuation_config(config, [current]))
        found = [c for c in found if c.exhaustive_learning]
        if not found:
            return False
        model, found = merge_models(model, found)
        last = min(found, key=candidate.distance)
        current = (last.sigma, last.m, last.mu)
    return last is not None and candidate.distance(last) <= radius + ladder[-1] * smdp.base.n_actions


# ---------------------------------------------------------------- discount bound


@dataclass(frozen=True)
class DeltaBarEstimate:
    """``value`` with its ingredients; ``split_state`` names a state whose myopic choice depends on beliefs."""

    value: float
    delta_hat: float
    max_abs_payoff: float
    split_state: Optional[int] = None


def delta_bar_estimate(smdp: FiniteSmdp) -> DeltaBarEstimate:
    """Bound below which stable outcomes must be equilibria, from myopic payoff gaps.

    For each state and belief the gap is the smallest myopic payoff shortfall of
    an action other than the (lowest-index) myopic maximizer; ties give 0.  Myopic
    payoffs are linear in the belief, so point masses settle the infimum: if one
    action is the strict maximizer at every point mass it stays so on the whole
    simplex and the smallest gap sits at a point mass; otherwise the maximizer
    changes somewhere on a segment between point masses and the gap reaches 0.
    """
    base = smdp.base
    r = np.einsum("sxt,isxt->isx", base.payoff, smdp.family)            # (n_theta, S, X)
    r = np.where(base.feasible[None], r, -np.inf)
    best = np.argmax(r, axis=2)
    gaps = r.max(axis=2, keepdims=True) - r
    np.put_along_axis(gaps, best[..., None], np.inf, axis=2)
    gaps = np.where(base.feasible[None], gaps, np.inf)
    big_m = base.max_abs_payoff
    split = np.flatnonzero(np.any(best != best[:1], axis=0))
    if split.size:
        return DeltaBarEstimate(0.0, 0.0, big_m, int(split[0]))
    delta_hat = max(float(gaps.min()) if gaps.size else math.inf, 0.0)
    if math.isinf(delta_hat):
        value = 1.0
    elif big_m == 0.0 or delta_hat == 0.0:
        value = 0.0
    else:
        ratio = delta_hat / big_m
        value = ratio / (2.0 + ratio)
    return DeltaBarEstimate(value, delta_hat, big_m)


def delta_bar(smdp: FiniteSmdp) -> float:
    return delta_bar_estimate(smdp).value
