"""Known-kernel dynamic programming: Bellman solution, Q-values, optimal action sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FiniteMdp

DEFAULT_TOL_OPT = 1e-9


@dataclass(frozen=True)
class ValueFunction:
    """State values and the sup-norm Bellman residual reached by the solver."""

    values: np.ndarray
    residual: float = 0.0
    sweeps: int = 0


@dataclass(frozen=True)
class OptimalActionSets:
    """Per-state optimal actions (boolean mask) at an absolute Q-value tolerance."""

    mask: np.ndarray
    tolerance: float

    def actions(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.mask[s])

    def greedy(self) -> np.ndarray:
        """One optimal action per state, lowest index on ties."""
        return np.argmax(self.mask, axis=1)


def _check_discount(mdp: FiniteMdp):
    if not 0.0 <= mdp.discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {mdp.discount}")


def bellman_q(mdp: FiniteMdp, v) -> np.ndarray:
    """Q-values ``sum_s' {payoff + discount * v(s')} Q(s'|s,x)``; ``-inf`` on infeasible pairs."""
    q = mdp.expected_payoff + mdp.discount * (mdp.kernel @ np.asarray(v, dtype=float))
    return np.where(mdp.feasible, q, -np.inf)


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, v0=None, max_sweeps: int = 1_000_000) -> ValueFunction:
    """Solve the Bellman equation by synchronous value iteration.

    Stops when the sup-norm change between sweeps is at most
    ``tol * (1 - discount) / (2 * discount)``; a single sweep suffices when the
    discount is zero.
    """
    _check_discount(mdp)
    if tol <= 0:
        raise ValueError("tol must be positive")
    delta = mdp.discount
    r = mdp.expected_payoff
    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=float)
    if delta == 0.0:
        v_new = np.where(mdp.feasible, r, -np.inf).max(axis=1)
        return ValueFunction(v_new, 0.0, 1)
    stop = tol * (1.0 - delta) / (2.0 * delta)
    for sweep in range(1, max_sweeps + 1):
        v_new = bellman_q(mdp, v).max(axis=1)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change <= stop:
            residual = float(np.max(np.abs(bellman_q(mdp, v).max(axis=1) - v)))
            return ValueFunction(v, residual, sweep)
    raise RuntimeError("value iteration did not converge")


def q_values(mdp: FiniteMdp, v: ValueFunction) -> np.ndarray:
    return bellman_q(mdp, v.values)


def optimal_action_sets(mdp: FiniteMdp, tol_opt: float = DEFAULT_TOL_OPT, v: ValueFunction | None = None,
                        tol: float = 1e-12) -> OptimalActionSets:
    if v is None:
        v = value_iteration(mdp, tol)
    q = q_values(mdp, v)
    best = q.max(axis=1, keepdims=True)
    return OptimalActionSets(mdp.feasible & (q >= best - tol_opt), tol_opt)


def optimality_shortfall(q: np.ndarray, sigma, support_floor: float = 0.0) -> float:
    """Largest Q-value shortfall among actions with ``sigma > support_floor``."""
    sigma = np.asarray(sigma, dtype=float)
    gap = q.max(axis=1, keepdims=True) - q
    supported = sigma > support_floor
    return float(np.max(np.where(supported, gap, 0.0), initial=0.0))


def is_optimal(mdp: FiniteMdp, sigma, tol_opt: float = DEFAULT_TOL_OPT, tol: float = 1e-12):
    """Whether every supported action is optimal; returns ``(flag, worst shortfall)``."""
    q = q_values(mdp, value_iteration(mdp, tol))
    worst = optimality_shortfall(q, sigma)
    return worst <= tol_opt, worst


def policy_evaluation(mdp: FiniteMdp, sigma, tol: float = 1e-10) -> ValueFunction:
    """Value of a stationary strategy, via a direct linear solve of ``(I - delta P) v = r``."""
    _check_discount(mdp)
    sigma = np.asarray(sigma, dtype=float)
    r_sigma = np.sum(sigma * mdp.expected_payoff, axis=1)
    p_sigma = np.einsum("sx,sxt->st", sigma, mdp.kernel)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * p_sigma, r_sigma)
    residual = float(np.max(np.abs(r_sigma + mdp.discount * p_sigma @ v - v)))
    if residual > tol:
        # polish with a few fixed-point sweeps; the operator is a contraction
        for _ in range(1000):
            v = r_sigma + mdp.discount * p_sigma @ v
            residual = float(np.max(np.abs(r_sigma + mdp.discount * p_sigma @ v - v)))
            if residual <= tol:
                break
    return ValueFunction(v, residual, 1)


def greedy_strategy(mdp: FiniteMdp, sets: OptimalActionSets, uniform: bool = False) -> np.ndarray:
    """Strategy from optimal sets: lowest-index action, or uniform over each set."""
    if uniform:
        m = sets.mask.astype(float)
        return m / m.sum(axis=1, keepdims=True)
    sigma = np.zeros(mdp.feasible.shape)
    sigma[np.arange(mdp.n_states), sets.greedy()] = 1.0
    return sigma


def perturbed_value_iteration(mdp: FiniteMdp, epsilon: float, tol: float = 1e-10, v0=None,
                              max_sweeps: int = 1_000_000) -> ValueFunction:
    """Value iteration when every feasible action must be played with probability at least ``epsilon``.

    The best constrained mix puts ``epsilon`` on every feasible action and the
    remaining mass on a maximizer, so each sweep is
    ``v(s) = epsilon * sum_x q(s, x) + (1 - k(s) epsilon) * max_x q(s, x)``.
    Same stopping rule as ``value_iteration``.
    """
    if epsilon <= 0:
        return value_iteration(mdp, tol, v0, max_sweeps)
    _check_discount(mdp)
    k = mdp.feasible.sum(axis=1)
    if np.any(k * epsilon > 1.0):
        raise ValueError(f"epsilon={epsilon} exceeds 1/|feasible actions| in some state")

    def sweep(v):
        q = bellman_q(mdp, v)
        return epsilon * np.where(mdp.feasible, q, 0.0).sum(axis=1) + (1.0 - k * epsilon) * q.max(axis=1)

    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=float)
    if mdp.discount == 0.0:
        return ValueFunction(sweep(v), 0.0, 1)
    stop = tol * (1.0 - mdp.discount) / (2.0 * mdp.discount)
    for n in range(1, max_sweeps + 1):
        v_new = sweep(v)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change <= stop:
            return ValueFunction(v, float(np.max(np.abs(sweep(v) - v))), n)
    raise RuntimeError("value iteration did not converge")


def policy_iteration(mdp: FiniteMdp, epsilon: float = 0.0, max_iter: int = 200, start=None) -> ValueFunction:
    """Exact values by Howard policy iteration (optionally with the ``epsilon`` action floor).

    Each step solves the linear system of the current greedy policy, so the
    result is accurate to rounding; falls back to value iteration if the greedy
    policy keeps changing.  ``start`` optionally gives the initial action per state.
    """
    _check_discount(mdp)
    feasible = mdp.feasible
    k = feasible.sum(axis=1)
    rows = np.arange(mdp.n_states)
    if start is None:
        choice = np.argmax(np.where(feasible, mdp.expected_payoff, -np.inf), axis=1)
    else:
        choice = np.asarray(start, dtype=int)
    base = np.where(feasible, epsilon, 0.0) if epsilon > 0 else np.zeros(feasible.shape)
    for n in range(1, max_iter + 1):
        sigma = base.copy()
        sigma[rows, choice] += 1.0 - k * epsilon if epsilon > 0 else 1.0
        v = policy_evaluation(mdp, sigma, tol=1e-13).values
        q = bellman_q(mdp, v)
        best = q.max(axis=1)
        # keep the incumbent action unless another is better beyond rounding
        keep = q[rows, choice] >= best - 1e-13 * max(1.0, float(np.max(np.abs(best))))
        if keep.all():
            return ValueFunction(v, float(np.max(np.abs(q[rows, choice] - q.max(axis=1)))), n)
        choice = np.where(keep, choice, np.argmax(q, axis=1))
    return perturbed_value_iteration(mdp, epsilon)
