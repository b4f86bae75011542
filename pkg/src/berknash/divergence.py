"""Weighted Kullback-Leibler divergence between the true and subjective kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import FiniteSmdp

INFINITE = math.inf   # divergence sentinel; ordered above every finite value
DEFAULT_TOL_K = 1e-9
IDENTIFICATION_TOL = 1e-9


class NoFiniteDivergence(ValueError):
    """Every grid point has infinite divergence from the data distribution."""


@dataclass(frozen=True)
class WkldProfile:
    """Divergence of every grid point and the resulting closest-parameter set."""

    values: np.ndarray
    min_value: float
    minimizer_set: np.ndarray
    tol_k: float

    def contains(self, i: int) -> bool:
        return bool(np.any(self.minimizer_set == i))

    def mask(self) -> np.ndarray:
        out = np.zeros(self.values.shape[0], bool)
        out[self.minimizer_set] = True
        return out


def row_divergence(p, q) -> float:
    """``sum p log(p/q)`` with ``0 log(0/q) = 0`` and ``p log(p/0) = inf``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        return INFINITE
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))


def _kl_rows(q, pos, logq, fam) -> np.ndarray:
    """KL of the true rows against a stack of kernels ``fam[..., s, x, s']``."""
    bad = np.any(pos & (fam <= 0), axis=-1)
    logf = np.log(np.where(pos & (fam > 0), fam, 1.0))
    kl = np.sum(np.where(pos, q * (logq - logf), 0.0), axis=-1)
    return np.where(bad, INFINITE, kl)


def _truth_logs(smdp: FiniteSmdp):
    base = smdp.base
    q = base.kernel
    pos = (q > 0) & base.feasible[:, :, None]
    return q, pos, np.log(np.where(pos, q, 1.0))


def divergence_table(smdp: FiniteSmdp) -> np.ndarray:
    """``D[i, s, x]`` = KL(Q(.|s,x) || Q_theta_i(.|s,x)) for every grid point and pair.

    Infeasible pairs get 0.  Cached on the model since it does not depend on the
    data; a model built by appending grid points reuses its parent's rows.
    """
    table = smdp.cache.get("divergence_table")
    if table is not None:
        return table
    q, pos, logq = _truth_logs(smdp)
    parent = smdp.cache.get("parent")
    start = 0
    rows = []
    if parent is not None and parent.n_theta <= smdp.n_theta:
        rows.append(divergence_table(parent))
        start = parent.n_theta
    per_point = max(1, pos.size)
    chunk = max(1, 4_000_000 // per_point)
    for lo in range(start, smdp.n_theta, chunk):
        rows.append(_kl_rows(q, pos, logq, smdp.family[lo:lo + chunk]))
    table = np.concatenate(rows) if rows else np.zeros((0,) + smdp.base.feasible.shape)
    table.setflags(write=False)
    smdp.cache["divergence_table"] = table
    return table


def wkld_values(smdp: FiniteSmdp, m) -> np.ndarray:
    """``K(m, theta_i)`` for every grid point; pairs with zero mass contribute nothing."""
    m = np.asarray(m, dtype=float)
    table = divergence_table(smdp)
    on = m > 0
    if not on.any():
        return np.zeros(smdp.n_theta)
    sub = table[:, on]                               # (n_theta, n_on)
    weights = m[on]
    infinite = np.any(np.isinf(sub), axis=1)
    finite = np.where(np.isinf(sub), 0.0, sub) @ weights
    return np.where(infinite, INFINITE, finite)


def wkld(smdp: FiniteSmdp, m, theta_index: int) -> float:
    """Weighted divergence of grid point ``theta_index`` given outcome distribution ``m``."""
    m = np.asarray(m, dtype=float)
    total = 0.0
    for s, x in zip(*np.nonzero(m > 0)):
        d = row_divergence(smdp.base.kernel[s, x], smdp.family[theta_index, s, x])
        if math.isinf(d):
            return INFINITE
        total += m[s, x] * d
    return total


def minimizer_set(smdp: FiniteSmdp, m, tol_k: float = DEFAULT_TOL_K) -> WkldProfile:
    if tol_k <= 0:
        raise ValueError("tol_k must be positive")
    values = wkld_values(smdp, m)
    best = float(values.min())
    if math.isinf(best):
        raise NoFiniteDivergence("no finite divergence: every grid point has K = +inf")
    members = np.flatnonzero(values <= best + tol_k)
    return WkldProfile(values, best, members, tol_k)


def _kernels_agree(smdp: FiniteSmdp, members, pair_mask, tol: float) -> bool:
    if len(members) <= 1:
        return True
    fam = smdp.family[members][:, pair_mask]          # (k, n_pairs, n_states)
    spread = fam.max(axis=0) - fam.min(axis=0)
    return bool(np.all(spread <= tol))


def weak_identification(smdp: FiniteSmdp, m, profile: WkldProfile, tol: float = IDENTIFICATION_TOL) -> bool:
    """All closest parameters induce the same kernel on the support of ``m``."""
    return _kernels_agree(smdp, profile.minimizer_set, np.asarray(m) > 0, tol)


def strong_identification(smdp: FiniteSmdp, m, profile: WkldProfile, tol: float = IDENTIFICATION_TOL) -> bool:
    """All closest parameters induce the same kernel on every feasible pair."""
    return _kernels_agree(smdp, profile.minimizer_set, smdp.base.feasible, tol)


def continuous_divergence(smdp: FiniteSmdp, m, theta) -> float:
    """``K(m, theta)`` at an off-grid parameter, using the model's ``kernel_fn``."""
    fam = np.asarray(smdp.kernel_fn(np.asarray(theta, dtype=float)), dtype=float)
    m = np.asarray(m, dtype=float)
    q, pos, logq = _truth_logs(smdp)
    on = m > 0
    d = _kl_rows(q[on], pos[on], logq[on], fam[on])
    if np.any(np.isinf(d)):
        return INFINITE
    return float(np.dot(m[on], d))
