"""Monopolist facing dynamic demand while believing demand is static.

State ``1`` means a sale happened last period, ``0`` that it did not.  The
monopolist picks a low or high price; the true sale probability depends on the
state and the price, but the subjective family only lets it depend on the price:
``Q_theta(1|s, L) = theta_L`` and ``Q_theta(1|s, H) = theta_H``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..mdp import optimal_action_sets
from ..model import FiniteMdp, FiniteSmdp, uniform_grid

STATES = ("0", "1")
ACTIONS = ("L", "H")


@dataclass(frozen=True)
class MonopolyParams:
    """Sale probabilities ``q_sx``, prices ``L < H``, discount, and the grid size per axis."""

    q0L: float = 0.6
    q0H: float = 0.3
    q1L: float = 0.9
    q1H: float = 0.7
    L: float = 1.0
    H: float = 1.4
    delta: float = 0.5
    grid_points: int = 101

    @property
    def ratio(self) -> float:
        return self.H / self.L

    def with_ratio(self, ratio: float) -> "MonopolyParams":
        return replace(self, H=ratio * self.L)

    def sale_table(self) -> np.ndarray:
        """``table[s, x]`` = true sale probability."""
        return np.array([[self.q0L, self.q0H], [self.q1L, self.q1H]])


def check_params(p: MonopolyParams):
    problems = []
    if not (p.q1L > p.q0L and p.q1H > p.q0H):
        problems.append("a sale must raise next-period sale probabilities (q1x > q0x)")
    if not (p.q0L > p.q0H and p.q1L > p.q1H):
        problems.append("the low price must sell more often (qsL > qsH)")
    if not (0 < p.L < p.H):
        problems.append("prices must satisfy 0 < L < H")
    if not (p.q1L / p.q1H < p.ratio < p.q0L / p.q0H):
        problems.append(f"H/L = {p.ratio} is outside (q1L/q1H, q0L/q0H) = "
                        f"({p.q1L / p.q1H}, {p.q0L / p.q0H})")
    if problems:
        raise ValueError("; ".join(problems))


def _kernel_from_sales(sales: np.ndarray) -> np.ndarray:
    k = np.empty((2, 2, 2))
    k[:, :, 1] = sales
    k[:, :, 0] = 1.0 - sales
    return k


def monopoly_mdp(p: MonopolyParams) -> FiniteMdp:
    prices = np.array([p.L, p.H])
    payoff = np.zeros((2, 2, 2))
    payoff[:, :, 1] = prices[None, :]
    return FiniteMdp(STATES, ACTIONS, np.ones((2, 2), bool), np.array([0.5, 0.5]),
                     _kernel_from_sales(p.sale_table()), payoff, p.delta)


def subjective_kernel(theta) -> np.ndarray:
    theta_l, theta_h = float(theta[0]), float(theta[1])
    return _kernel_from_sales(np.array([[theta_l, theta_h], [theta_l, theta_h]]))


def monopoly_build(p: MonopolyParams, theta_grid=None, check: bool = True) -> FiniteSmdp:
    """Two-state, two-price model with the static-demand family on a ``[0, 1]^2`` grid."""
    if check:
        check_params(p)
    grid = uniform_grid([(0.0, 1.0), (0.0, 1.0)], p.grid_points) if theta_grid is None else np.asarray(theta_grid)
    family = np.array([subjective_kernel(t) for t in grid])
    return FiniteSmdp(monopoly_mdp(p), grid, family, subjective_kernel, np.array([[0.0, 1.0], [0.0, 1.0]]))


# ---------------------------------------------------------------- closed forms


def sale_probability(p: MonopolyParams, sigma_h: float) -> float:
    """Stationary probability of state 1 when the high price is played with probability ``sigma_h``."""
    a = (1 - sigma_h) * p.q0L + sigma_h * p.q0H
    b = (1 - sigma_h) * p.q1L + sigma_h * p.q1H
    return a / (1.0 - b + a)


def closest_parameter(p: MonopolyParams, sigma_h: float) -> tuple:
    """Sale probability given each price under the stationary state distribution.

    With a state-independent strategy the state distribution conditional on the
    price equals the stationary state distribution, so
    ``theta_x = m(0) q_0x + m(1) q_1x``.
    """
    m1 = sale_probability(p, sigma_h)
    m0 = 1.0 - m1
    return m0 * p.q0L + m1 * p.q1L, m0 * p.q0H + m1 * p.q1H


def perceived_gain(p: MonopolyParams, sigma_h: float) -> float:
    """Perceived profit gain of the high price at the closest parameter."""
    theta_l, theta_h = closest_parameter(p, sigma_h)
    return p.H * theta_h - p.L * theta_l


@dataclass(frozen=True)
class MonopolyOracle:
    """Regime thresholds, the equilibrium high-price probability, and ``C_delta``."""

    D1: float
    D2: float
    regime: str
    sigma_star: float
    C_delta: float
    always_low_optimal: bool


def thresholds(p: MonopolyParams) -> tuple:
    d1 = p.q0L / ((1 - p.q1L) * p.q0H + p.q1H * p.q0L)
    d2 = (1 - p.q1H) * p.q0L / p.q0H + p.q1L
    return d1, d2


def solve_sigma_star(p: MonopolyParams, tol: float = 1e-14) -> float:
    """Root of the perceived gain in the high-price probability, by bisection."""
    lo, hi = 0.0, 1.0
    g_lo = perceived_gain(p, lo)
    if g_lo <= 0:
        return 0.0
    if perceived_gain(p, hi) >= 0:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if perceived_gain(p, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def always_low_is_optimal(p: MonopolyParams) -> bool:
    sets = optimal_action_sets(monopoly_mdp(p))
    return bool(np.all(sets.mask[:, 0]))


def c_delta(p: MonopolyParams, tol: float = 1e-10) -> float:
    """Largest price ratio at which always charging the low price is optimal under the truth.

    Bracketed by bisection on ``H/L`` with value iteration in the true MDP.
    """
    lo = 1.0
    hi = 2.0
    while always_low_is_optimal(p.with_ratio(hi)):
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            return np.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if always_low_is_optimal(p.with_ratio(mid)):
            lo = mid
        else:
            hi = mid
    return lo


def monopoly_oracle(p: MonopolyParams) -> MonopolyOracle:
    d1, d2 = thresholds(p)
    r = p.ratio
    if r <= d1:
        regime, sigma = "low", 0.0
    elif r >= d2:
        regime, sigma = "high", 1.0
    else:
        regime, sigma = "interior", solve_sigma_star(p)
    cd = c_delta(p)
    return MonopolyOracle(d1, d2, regime, sigma, cd, r < cd)
