"""Stochastic growth where the agent ignores the correlation of utility and productivity shocks.

Each period the agent sees log income (on a bin grid) and a utility shock
``z in {L, H}`` and invests a fraction ``a`` of income.  The truth is
``ln y' = alpha* + beta* ln x + gamma* z + xi``; the agent fits
``ln y' = alpha + beta ln x + noise`` with noise independent of ``z``.

Discretization:

* log income lives on ``n_bins`` equal-width bins; a transition puts normal
  mass on the bins, with mass beyond the grid clamped to the end bins;
* investment fractions form a small grid that includes 0; investing nothing
  is treated as investing a floor amount ``x_floor`` so the log stays finite;
* the parameter grid is sheared, ``theta = (c - beta ln x_floor, beta)``, so the
  predicted log income after zero investment is ``c`` for every ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from ..chain import stationary_vectors
from ..model import FiniteMdp, FiniteSmdp


@dataclass(frozen=True)
class GrowthParams:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    q: float = 0.5
    L: float = 1.0
    H: float = 2.0
    delta: float = 0.9
    n_bins: int = 31
    ln_y_min: float = -3.0
    ln_y_max: float = 8.0
    fractions: tuple = (0.0, 0.2, 0.4, 0.6, 0.8)
    ln_x_floor: float = -5.0
    c_grid: tuple = (-5.0, 5.0, 11)
    beta_grid: tuple = (0.0, 1.0, 11)

    def __post_init__(self):
        if not 0 < self.delta * self.beta < 1:
            raise ValueError("need 0 < delta * beta* < 1")
        if not 0 < self.L < self.H or not 0 < self.q < 1:
            raise ValueError("need 0 < L < H and 0 < q < 1")

    @property
    def shocks(self) -> np.ndarray:
        return np.array([self.L, self.H])

    @property
    def shock_probs(self) -> np.ndarray:
        return np.array([1 - self.q, self.q])

    def bins(self) -> tuple:
        """Bin centers and interior edges of the log-income grid."""
        edges = np.linspace(self.ln_y_min, self.ln_y_max, self.n_bins + 1)
        return 0.5 * (edges[:-1] + edges[1:]), edges[1:-1]


def binned_normal(means: np.ndarray, inner_edges: np.ndarray) -> np.ndarray:
    """Unit-variance normal mass per bin; the outer bins absorb everything beyond the grid.

    Tail masses are computed on the side of the mean where they are small, so
    bins far from the mean keep a tiny positive probability instead of
    cancelling to zero.
    """
    means = np.asarray(means, dtype=float)[..., None]
    lo = np.concatenate([[-np.inf], inner_edges]) - means
    hi = np.concatenate([inner_edges, [np.inf]]) - means
    upper = lo > 0
    mass = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    mass = np.clip(mass, 0.0, None)
    return mass / mass.sum(axis=-1, keepdims=True)


def _log_investment(p: GrowthParams) -> np.ndarray:
    """``ln x_eff[i, j]`` for income bin ``i`` and fraction ``j``."""
    centers, _ = p.bins()
    frac = np.asarray(p.fractions, dtype=float)
    with np.errstate(divide="ignore"):
        lx = centers[:, None] + np.log(frac)[None, :]
    return np.maximum(lx, p.ln_x_floor)


def _assemble(p: GrowthParams, y_probs: np.ndarray) -> np.ndarray:
    """Kernel over states ``(bin, z)`` from income-bin rows ``y_probs[i, z, j, bin']``."""
    nb, nz, nx = p.n_bins, 2, len(p.fractions)
    k = y_probs[:, :, :, :, None] * p.shock_probs[None, None, None, None, :]     # (i, z, j, i', z')
    return k.reshape(nb * nz, nx, nb * nz)


def true_kernel(p: GrowthParams) -> np.ndarray:
    _, inner = p.bins()
    lx = _log_investment(p)                                              # (i, j)
    means = p.alpha + p.beta * lx[:, None, :] + p.gamma * p.shocks[None, :, None]
    return _assemble(p, binned_normal(means, inner))


def subjective_kernel_fn(p: GrowthParams) -> Callable:
    _, inner = p.bins()
    lx = _log_investment(p)

    def kernel(theta) -> np.ndarray:
        alpha, beta = float(theta[0]), float(theta[1])
        means = np.broadcast_to(alpha + beta * lx[:, None, :], (p.n_bins, 2, len(p.fractions)))
        return _assemble(p, binned_normal(means, inner))

    return kernel


def growth_mdp(p: GrowthParams) -> FiniteMdp:
    centers, _ = p.bins()
    frac = np.asarray(p.fractions, dtype=float)
    nb, nx = p.n_bins, frac.size
    names = [f"y{i}_{z}" for i in range(nb) for z in ("L", "H")]
    util = p.shocks[None, :, None] * (centers[:, None, None] + np.log1p(-frac)[None, None, :])   # (i, z, j)
    payoff = np.repeat(util.reshape(nb * 2, nx)[:, :, None], nb * 2, axis=2)
    q0 = np.zeros(nb * 2)
    start = int(np.argmin(np.abs(centers - 0.5 * (p.ln_y_min + p.ln_y_max))))
    q0[2 * start: 2 * start + 2] = p.shock_probs
    return FiniteMdp(names, [f"a{f:g}" for f in frac], np.ones((nb * 2, nx), bool), q0,
                     true_kernel(p), payoff, p.delta)


def sheared_grid(p: GrowthParams) -> np.ndarray:
    cs = np.linspace(*p.c_grid[:2], int(p.c_grid[2]))
    bs = np.linspace(*p.beta_grid[:2], int(p.beta_grid[2]))
    c, b = np.meshgrid(cs, bs, indexing="ij")
    return np.stack([c.ravel() - b.ravel() * p.ln_x_floor, b.ravel()], axis=1)


def growth_build(p: GrowthParams, theta_grid=None) -> FiniteSmdp:
    grid = sheared_grid(p) if theta_grid is None else np.asarray(theta_grid, dtype=float)
    fn = subjective_kernel_fn(p)
    family = np.array([fn(t) for t in grid])
    b_lo, b_hi = p.beta_grid[0], p.beta_grid[1]
    a_lo = p.c_grid[0] - max(b_hi * p.ln_x_floor, b_lo * p.ln_x_floor)
    a_hi = p.c_grid[1] - min(b_hi * p.ln_x_floor, b_lo * p.ln_x_floor)
    return FiniteSmdp(growth_mdp(p), grid, family, fn, np.array([[a_lo, a_hi], [b_lo, b_hi]]))


def fraction_strategy(p: GrowthParams, by_shock) -> np.ndarray:
    """Pure strategy investing fraction index ``by_shock[z]`` in every income bin."""
    nx = len(p.fractions)
    sigma = np.zeros((p.n_bins * 2, nx))
    for z in range(2):
        sigma[z::2, by_shock[z]] = 1.0
    return sigma


# ---------------------------------------------------------------- closed forms


def investment_fractions(p: GrowthParams, beta: float) -> tuple:
    """Optimal fractions ``(A_L, A_H)`` for a believed elasticity ``beta``.

    From the Bellman equation with log utility:
    ``A_z = d c / (z (1 - d) + d c)`` with ``d = delta beta`` and
    ``c = (1 - q) L + q H``.
    """
    d = p.delta * beta
    c = (1 - p.q) * p.L + p.q * p.H
    return tuple(d * c / (z * (1 - d) + d * c) for z in (p.L, p.H))


def _income_moments_analytic(p: GrowthParams, ln_a: np.ndarray) -> float:
    """Stationary variance of log income for the AR(1) it follows under fixed fractions."""
    g = p.shock_probs
    w = p.beta * ln_a + p.gamma * p.shocks          # per-shock drift of ln y'
    var_w = float(g @ w ** 2 - (g @ w) ** 2)
    return (var_w + 1.0) / (1.0 - p.beta ** 2)


def _income_variance_chain(p: GrowthParams, ln_a: np.ndarray, n_bins: int) -> float:
    """Variance of log income under the stationary law of the discretized chain."""
    lo, hi = _chain_range(p, ln_a)
    edges = np.linspace(lo, hi, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    means = p.alpha + p.beta * (centers[:, None] + ln_a[None, :]) + p.gamma * p.shocks[None, :]
    rows = binned_normal(means, edges[1:-1])                      # (i, z, i')
    chain = np.einsum("z,izj->ij", p.shock_probs, rows)
    pi = stationary_vectors(chain)[0][0]
    mean = float(pi @ centers)
    return float(pi @ (centers - mean) ** 2)


def _chain_range(p: GrowthParams, ln_a: np.ndarray) -> tuple:
    g = p.shock_probs
    mean = (p.alpha + g @ (p.beta * ln_a + p.gamma * p.shocks)) / (1 - p.beta)
    sd = np.sqrt(_income_moments_analytic(p, ln_a))
    return mean - 8 * sd, mean + 8 * sd


def beta_hat(p: GrowthParams, fractions, method: str = "chain", n_bins: int = 101) -> float:
    """Least-squares elasticity under fixed investment fractions ``(A_L, A_H)``.

    ``beta* + gamma* Cov(Z, ln A_Z) / (Var(ln A_Z) + Var(ln Y))`` with ``Var(ln Y)``
    from the discretized stationary chain (``method="chain"``) or from the AR(1)
    closed form (``"analytic"``).  Equal fractions (including no investment) carry
    no information about the bias, so the result is ``beta*`` exactly.
    """
    a = np.asarray(fractions, dtype=float)
    if a[0] == a[1]:
        return p.beta
    ln_a = np.log(a)
    g = p.shock_probs
    cov = float(g @ (p.shocks * ln_a) - (g @ p.shocks) * (g @ ln_a))
    var_a = float(g @ ln_a ** 2 - (g @ ln_a) ** 2)
    if method == "chain":
        var_y = _income_variance_chain(p, ln_a, n_bins)
    elif method == "analytic":
        var_y = _income_moments_analytic(p, ln_a)
    else:
        raise ValueError(f"unknown method {method!r}")
    return p.beta + p.gamma * cov / (var_a + var_y)


@dataclass(frozen=True)
class GrowthOracle:
    params: GrowthParams
    method: str = "chain"
    n_bins: int = 101

    def A(self, beta: float) -> tuple:
        return investment_fractions(self.params, beta)

    def beta_hat_of(self, beta: float) -> float:
        return beta_hat(self.params, self.A(beta), self.method, self.n_bins)

    def beta_M(self, damping: float = 0.5, tol: float = 1e-12, max_iter: int = 10_000) -> float:
        """Fixed point of ``beta -> beta_hat(A(beta))`` by damped iteration from ``beta*``."""
        b = self.params.beta
        hist = []
        for _ in range(max_iter):
            nxt = (1 - damping) * b + damping * self.beta_hat_of(b)
            hist.append(nxt)
            if abs(nxt - b) <= tol:
                return nxt
            b = nxt
        raise RuntimeError(f"fixed point iteration did not settle; last iterates {hist[-5:]}")


def growth_oracle(p: GrowthParams, method: str = "chain", n_bins: int = 101) -> GrowthOracle:
    return GrowthOracle(p, method, n_bins)
