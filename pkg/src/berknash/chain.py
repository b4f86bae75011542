"""Outcome kernels on feasible state-action pairs and their stationary distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import FiniteMdp

STATIONARY_TOL = 1e-10
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class OutcomeKernel:
    """Transition matrix over feasible pairs: ``matrix[i, j] = sigma(x_j|s_j) Q(s_j|s_i, x_i)``.

    Attributes:
        matrix: ``(n_pairs, n_pairs)`` row-stochastic matrix.
        pairs: ``(n_pairs, 2)`` index array of the feasible pairs.
        shape: the ``(n_states, n_actions)`` shape of outcome distributions.
    """

    matrix: np.ndarray
    pairs: np.ndarray
    shape: tuple

    def to_outcome(self, vec) -> np.ndarray:
        m = np.zeros(self.shape)
        m[self.pairs[:, 0], self.pairs[:, 1]] = vec
        return m

    def from_outcome(self, m) -> np.ndarray:
        return np.asarray(m)[self.pairs[:, 0], self.pairs[:, 1]]


@dataclass(frozen=True, eq=False)
class StationarySet:
    """Extreme stationary distributions, one per recurrent class.

    Attributes:
        extremes: list of ``(n_states, n_actions)`` outcome distributions.
        classes: list of index arrays into the pair list, one per recurrent class.
        transient: indices of transient pairs (zero mass in every extreme).

    Every stationary distribution is a convex combination of the extremes.
    """

    extremes: list
    classes: list
    transient: np.ndarray


def outcome_kernel(mdp: FiniteMdp, sigma) -> OutcomeKernel:
    sigma = np.asarray(sigma, dtype=float)
    pairs = mdp.pairs
    q = mdp.kernel[pairs[:, 0], pairs[:, 1]]                       # (n_pairs, n_states)
    matrix = q[:, pairs[:, 0]] * sigma[pairs[:, 0], pairs[:, 1]][None, :]
    return OutcomeKernel(matrix, pairs, mdp.feasible.shape)


def _closed_classes(p: np.ndarray):
    """Strongly connected components of the positive digraph that no edge leaves."""
    graph = csr_matrix(p > 0)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    rows, cols = graph.nonzero()
    leaving = labels[rows] != labels[cols]
    open_comp = np.zeros(n_comp, bool)
    open_comp[labels[rows[leaving]]] = True
    closed = [np.flatnonzero(labels == c) for c in range(n_comp) if not open_comp[c]]
    # deterministic order: by smallest member
    closed.sort(key=lambda idx: idx[0])
    return closed


def _solve_class(p_class: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible stochastic matrix."""
    n = p_class.shape[0]
    if n == 1:
        return np.ones(1)
    a = p_class.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    if np.linalg.cond(a) <= CONDITION_LIMIT:
        pi = np.linalg.solve(a, b)
    else:
        pi = _power_iteration(p_class)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _power_iteration(p: np.ndarray, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    # lazy chain avoids periodicity; it has the same stationary vector
    lazy = 0.5 * (p + np.eye(p.shape[0]))
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    return pi


def stationary_vectors(p: np.ndarray):
    """Extreme stationary vectors of a stochastic matrix and its recurrent classes."""
    if np.all(p > 0):
        classes = [np.arange(p.shape[0])]        # positive matrix: one recurrent class
    else:
        classes = _closed_classes(p)
    vectors = []
    for members in classes:
        pi = np.zeros(p.shape[0])
        pi[members] = _solve_class(p[np.ix_(members, members)])
        vectors.append(pi)
    recurrent = np.concatenate(classes) if classes else np.array([], int)
    transient = np.setdiff1d(np.arange(p.shape[0]), recurrent)
    return vectors, classes, transient


def stationary_set(kernel: OutcomeKernel) -> StationarySet:
    vectors, classes, transient = stationary_vectors(kernel.matrix)
    return StationarySet([kernel.to_outcome(v) for v in vectors], classes, transient)


def state_chain(mdp: FiniteMdp, sigma) -> np.ndarray:
    """State-to-state transition matrix under ``sigma``."""
    return np.einsum("sx,sxt->st", np.asarray(sigma, dtype=float), mdp.kernel)


def stationary_outcomes(mdp: FiniteMdp, sigma) -> list:
    """Extreme stationary outcome distributions, computed on the state chain.

    An outcome distribution ``m`` is stationary for ``(sigma, Q)`` exactly when its
    state marginal is stationary for the state chain and ``m(s, x) = p(s) sigma(x|s)``,
    so the extremes of the pair chain are the state-chain extremes times ``sigma``.
    """
    sigma = np.asarray(sigma, dtype=float)
    vectors, _, _ = stationary_vectors(state_chain(mdp, sigma))
    return [p[:, None] * sigma for p in vectors]


def apply_outcome_kernel(mdp: FiniteMdp, sigma, m) -> np.ndarray:
    """One step of the outcome chain: ``m'(s',x') = sigma(x'|s') sum Q(s'|s,x) m(s,x)``."""
    p_next = np.einsum("sx,sxt->t", np.asarray(m, dtype=float), mdp.kernel)
    return p_next[:, None] * np.asarray(sigma, dtype=float)


def stationarity_residual(mdp: FiniteMdp, sigma, m) -> float:
    """``||m - M[m]||_inf`` plus any departure of ``m`` from being a distribution."""
    m = np.asarray(m, dtype=float)
    res = float(np.max(np.abs(m - apply_outcome_kernel(mdp, sigma, m))))
    res = max(res, abs(m.sum() - 1.0), float(-m.min(initial=0.0)))
    if np.any(m[~mdp.feasible] != 0.0):
        res = max(res, float(np.max(np.abs(m[~mdp.feasible]))))
    return res


def nearest_stationary(mdp: FiniteMdp, sigma, m=None) -> np.ndarray:
    """Stationary extreme closest in sup-norm to ``m`` (the first extreme if ``m`` is None)."""
    extremes = stationary_outcomes(mdp, sigma)
    if m is None or len(extremes) == 1:
        return extremes[0]
    d = [np.max(np.abs(e - m)) for e in extremes]
    return extremes[int(np.argmin(d))]


def full_communication(mdp: FiniteMdp) -> bool:
    """Whether every state reaches every other state through positive-probability actions."""
    reach = np.any((mdp.kernel > 0) & mdp.feasible[:, :, None], axis=1)
    n_comp, _ = connected_components(csr_matrix(reach), directed=True, connection="strong")
    return n_comp == 1


def support_is_full(m, mdp: FiniteMdp) -> bool:
    m = np.asarray(m)
    return bool(np.all(m[mdp.feasible] > 0))
