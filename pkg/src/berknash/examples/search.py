"""Job search where the worker ignores the correlation between firing and offer arrival.

States are wage offers on a grid; index 0 is the no-offer state (wage 0).
Actions are ``reject`` (0) and ``accept`` (1).  A fundamental ``z`` drawn after
the decision sets the firing probability ``gamma(z)`` and the offer probability
``lambda(z)``; the worker believes offers arrive with a constant probability
``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import FiniteMdp, FiniteSmdp

ACTIONS = ("reject", "accept")
BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class SearchParams:
    """Wage grid with offer pmf, fundamental states ``(gamma, lam)`` with weights ``g``."""

    wages: np.ndarray
    f: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    g: np.ndarray
    delta: float = 0.9

    @property
    def gbar(self) -> float:
        return float(np.dot(self.g, self.gamma))

    @property
    def lbar(self) -> float:
        return float(np.dot(self.g, self.lam))

    @property
    def e_gl(self) -> float:
        return float(np.dot(self.g, self.gamma * self.lam))

    @property
    def cov(self) -> float:
        return self.e_gl - self.gbar * self.lbar


def default_params(n_wages: int = 201, delta: float = 0.9) -> SearchParams:
    wages = np.linspace(0.0, 1.0, n_wages)
    f = np.zeros(n_wages)
    f[1:] = 1.0 / (n_wages - 1)
    return SearchParams(wages, f, np.array([0.05, 0.3]), np.array([0.7, 0.3]), np.array([0.5, 0.5]), delta)


def random_params(rng: np.random.Generator, n_wages: int = 201) -> SearchParams:
    """Random two-point fundamental with negatively correlated firing and offer rates."""
    wages = np.linspace(0.0, 1.0, n_wages)
    a, b = rng.uniform(1.0, 4.0, size=2)
    mid = (wages[1:] - 0.5 / (n_wages - 1)).clip(1e-9, 1)
    dens = mid ** (a - 1) * (1 - mid).clip(1e-9) ** (b - 1)
    f = np.zeros(n_wages)
    f[1:] = dens / dens.sum()
    gamma = np.sort(rng.uniform(0.02, 0.6, size=2))
    lam = np.sort(rng.uniform(0.1, 0.95, size=2))[::-1]      # gamma high <=> lambda low
    w = rng.uniform(0.2, 0.8)
    return SearchParams(wages, f, gamma, lam, np.array([w, 1 - w]), float(rng.uniform(0.8, 0.95)))


def _payoff(p: SearchParams) -> np.ndarray:
    n = p.wages.shape[0]
    pay = np.zeros((n, 2, n))
    pay[:, 1, :] = p.wages[:, None]
    return pay


def true_kernel(p: SearchParams) -> np.ndarray:
    n = p.wages.shape[0]
    k = np.zeros((n, 2, n))
    k[:, 0, :] = p.lbar * p.f
    k[:, 0, 0] += 1.0 - p.lbar
    k[:, 1, :] = p.e_gl * p.f
    k[:, 1, 0] += p.gbar - p.e_gl
    k[np.arange(n), 1, np.arange(n)] += 1.0 - p.gbar
    return k


def subjective_kernel_fn(p: SearchParams) -> Callable:
    n = p.wages.shape[0]
    stay = np.zeros((n, n))
    stay[np.arange(n), np.arange(n)] = 1.0
    zero = np.zeros(n)
    zero[0] = 1.0

    def kernel(theta) -> np.ndarray:
        t = float(np.atleast_1d(theta)[0])
        k = np.empty((n, 2, n))
        k[:, 0, :] = t * p.f + (1 - t) * zero
        k[:, 1, :] = (1 - p.gbar) * stay + p.gbar * (t * p.f + (1 - t) * zero)[None, :]
        return k

    return kernel


def search_mdp(p: SearchParams) -> FiniteMdp:
    n = p.wages.shape[0]
    names = [f"w{i}" for i in range(n)]
    q0 = p.lbar * p.f.copy()
    q0[0] += 1.0 - p.lbar
    return FiniteMdp(names, ACTIONS, np.ones((n, 2), bool), q0, true_kernel(p), _payoff(p), p.delta)


def search_build(p: SearchParams, theta_grid=None) -> FiniteSmdp:
    if not (p.gbar > 0 and p.lbar > 0):
        raise ValueError("mean firing and offer probabilities must be positive")
    if abs(p.f.sum() - 1.0) > 1e-12 or p.f[0] != 0.0:
        raise ValueError("offer pmf must sum to one and put no mass on the no-offer state")
    grid = np.linspace(0.0, 1.0, 101) if theta_grid is None else np.asarray(theta_grid, dtype=float)
    fn = subjective_kernel_fn(p)
    family = np.array([fn(t) for t in grid])
    return FiniteSmdp(search_mdp(p), grid, family, fn, np.array([[0.0, 1.0]]))


# ---------------------------------------------------------------- closed forms


def _option_value(p: SearchParams, w: float) -> float:
    above = p.wages > w
    return float(np.sum((p.wages[above] - w) * p.f[above]))


def _bisect(fn, lo, hi, tol=BISECTION_TOL):
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"root not bracketed on [{lo}, {hi}]: values {f_lo}, {f_hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SearchOracle:
    """Closed-form reservation wages, beliefs and the stationary rejection share."""

    params: SearchParams

    def w_of_theta(self, theta: float) -> float:
        p = self.params
        scale = 1 - p.delta + p.delta * p.gbar
        coef = p.delta * theta * (1 - p.gbar)
        return _bisect(lambda w: w * scale - coef * _option_value(p, w), 0.0, 1.0)

    def theta_of_m(self, m_x0: float) -> float:
        p = self.params
        m_x1 = 1.0 - m_x0
        return (p.e_gl * m_x1 + p.lbar * m_x0) / (p.gbar * m_x1 + m_x0)

    def m_x0_of_w(self, w: float) -> float:
        p = self.params
        tail = float(p.f[p.wages > w].sum())
        return (p.gbar - tail * p.e_gl) / (tail * (p.lbar - p.e_gl) + p.gbar)

    def theta_of_w(self, w: float) -> float:
        return self.theta_of_m(self.m_x0_of_w(w))

    @property
    def w_star(self) -> float:
        p = self.params
        scale = 1 - p.delta + p.delta * p.gbar
        coef = p.delta * (p.lbar - p.e_gl)
        return _bisect(lambda w: w * scale - coef * _option_value(p, w), 0.0, 1.0)

    @property
    def w_M(self) -> float:
        """Fixed point of the reservation wage composed with the closest belief."""
        return _bisect(lambda w: self.w_of_theta(self.theta_of_w(w)) - w, 0.0, 1.0)

    @property
    def theta_M(self) -> float:
        return self.theta_of_w(self.w_M)


def search_oracle(p: SearchParams) -> SearchOracle:
    return SearchOracle(p)


def threshold_strategy(p: SearchParams, w: float) -> np.ndarray:
    """Accept exactly the offers strictly above ``w``."""
    accept = (p.wages > w).astype(float)
    return np.stack([1 - accept, accept], axis=1)


def threshold_cell(p: SearchParams, w: float) -> int:
    """Index of the lowest accepted wage under reservation wage ``w``."""
    above = np.flatnonzero(p.wages > w)
    return int(above[0]) if above.size else p.wages.shape[0]


def strategy_cell(sigma) -> int:
    """Index of the lowest offer accepted with positive probability (ignoring the no-offer state)."""
    acc = np.flatnonzero(np.asarray(sigma)[1:, 1] > 1e-12)
    return int(acc[0]) + 1 if acc.size else np.asarray(sigma).shape[0]
