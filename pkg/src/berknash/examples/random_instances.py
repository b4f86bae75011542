"""Random small SMDPs for regression suites."""

from __future__ import annotations

import numpy as np

from ..model import FiniteMdp, FiniteSmdp


def _random_feasible(rng, n_states, n_actions):
    feasible = rng.random((n_states, n_actions)) < 0.75
    feasible[np.arange(n_states), rng.integers(n_actions, size=n_states)] = True
    return feasible


def _random_kernel(rng, feasible, n_states, concentration=1.0, floor=0.0):
    k = rng.dirichlet(np.full(n_states, concentration), size=feasible.shape)
    if floor > 0:
        k = (k + floor) / (1 + n_states * floor)
    return np.where(feasible[:, :, None], k, 0.0)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, discount: float | None = None,
               kernel=None) -> FiniteMdp:
    feasible = _random_feasible(rng, n_states, n_actions)
    if kernel is None:
        kernel = _random_kernel(rng, feasible, n_states, floor=0.02)
    payoff = np.where(feasible[:, :, None], rng.uniform(-1, 1, size=(n_states, n_actions, n_states)), 0.0)
    q0 = rng.dirichlet(np.ones(n_states))
    delta = float(rng.uniform(0, 0.9)) if discount is None else discount
    return FiniteMdp([f"s{i}" for i in range(n_states)], [f"x{j}" for j in range(n_actions)], feasible,
                     q0, kernel, payoff, delta)


def random_correct_smdp(rng: np.random.Generator, max_states: int = 5, max_actions: int = 4,
                        max_theta: int = 6) -> FiniteSmdp:
    """Correctly specified instance: the truth is one grid point; the others differ on every pair.

    Every kernel row is strictly positive, so any other grid point has positive
    divergence wherever the data put mass and the family is strongly identified.
    """
    n_s = int(rng.integers(1, max_states + 1))
    n_x = int(rng.integers(1, max_actions + 1))
    n_t = int(rng.integers(2, max_theta + 1))
    mdp = random_mdp(rng, n_s, n_x)
    family = np.array([_random_kernel(rng, mdp.feasible, n_s, floor=0.02) for _ in range(n_t)])
    true_index = int(rng.integers(n_t))
    family[true_index] = mdp.kernel
    grid = np.arange(n_t, dtype=float)[:, None]
    return FiniteSmdp(mdp, grid, family)


def random_misspecified_smdp(rng: np.random.Generator, max_states: int = 3, max_actions: int = 2,
                             max_theta: int = 3) -> FiniteSmdp:
    """Misspecified instance with strictly positive kernels and at most ``max_theta`` grid points."""
    n_s = int(rng.integers(2, max_states + 1))
    n_x = int(rng.integers(2, max_actions + 1))
    n_t = int(rng.integers(2, max_theta + 1))
    mdp = random_mdp(rng, n_s, n_x)
    family = np.array([_random_kernel(rng, mdp.feasible, n_s, floor=0.05) for _ in range(n_t)])
    return FiniteSmdp(mdp, np.arange(n_t, dtype=float)[:, None], family)
