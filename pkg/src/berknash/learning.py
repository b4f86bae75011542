"""Bayesian learning: belief updates, the belief-state Bellman equation, and simulation.

Beliefs live on the finite parameter grid.  The belief-state value function is
solved on a regular barycentric grid of the simplex and interpolated with the
Freudenthal triangulation, which writes any belief as a convex combination of
the vertices of the grid simplex containing it.

Simulation runs a batch of seeds in lockstep.  Each seed draws all of its
uniforms up front from its own generator, so a seed gives the same trace
whether it runs alone or in a batch.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .chain import nearest_stationary
from .divergence import NoFiniteDivergence, minimizer_set
from .equilibrium import Tolerances, exhaustive_learning_check, verify
from .mdp import bellman_q, policy_iteration
from .model import FiniteSmdp, mixture_kernel, point_mass

MAX_GRID_POINTS = 1_000_000
ZERO_LIKELIHOOD = 1e-300
TIE_TOL = 1e-9
POLICY_MODES = ("belief-optimal", "certainty-equivalent", "myopic")


class ZeroLikelihood(ValueError):
    """The observed transition has probability zero under every atom of the belief."""


def bayes_update(smdp: FiniteSmdp, mu, s: int, x: int, s_next: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    post = mu * smdp.family[:, s, x, s_next]
    total = post.sum()
    if total <= ZERO_LIKELIHOOD:
        raise ZeroLikelihood(f"zero-likelihood observation ({s}, {x}) -> {s_next}")
    return post / total


# ---------------------------------------------------------------- belief grid


@dataclass(frozen=True, eq=False)
class BeliefGrid:
    """All beliefs with coordinates in multiples of ``1/resolution``.

    Attributes:
        n_theta: number of parameter atoms.
        resolution: grid resolution ``r``; ``r = 1`` gives the point masses only.
        points: ``(n_points, n_theta)`` array of beliefs.
    """

    n_theta: int
    resolution: int
    points: np.ndarray = field(repr=False)
    _codes: np.ndarray = field(repr=False)

    @classmethod
    def regular(cls, n_theta: int, resolution: int) -> "BeliefGrid":
        if resolution < 1:
            raise ValueError("resolution must be at least 1")
        count = comb(resolution + n_theta - 1, n_theta - 1)
        if count > MAX_GRID_POINTS:
            raise MemoryError(f"belief grid would have {count} points (limit {MAX_GRID_POINTS})")
        counts = np.array(list(_compositions(resolution, n_theta)), dtype=np.int64)
        codes = _encode(counts, resolution)
        order = np.argsort(codes)
        counts, codes = counts[order], codes[order]
        return cls(n_theta, resolution, counts / resolution, codes)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def vertex_index(self, i: int) -> int:
        """Index of the point mass on atom ``i``."""
        counts = np.zeros(self.n_theta, dtype=np.int64)
        counts[i] = self.resolution
        return int(np.searchsorted(self._codes, _encode(counts[None], self.resolution)[0]))

    def interpolate(self, mu) -> tuple:
        """Vertex indices and convex weights for each belief in ``mu`` (shape ``(..., n_theta)``).

        Returns ``(indices, weights)`` each of shape ``(..., n_theta)``.
        """
        mu = np.asarray(mu, dtype=float)
        r, n = self.resolution, self.n_theta
        lead = mu.shape[:-1]
        flat = mu.reshape(-1, n)
        if n == 1:
            idx = np.zeros((flat.shape[0], 1), dtype=np.int64)
            return idx.reshape(lead + (1,)), np.ones(lead + (1,))
        # cumulative coordinates y_j = r * sum_{i >= j} mu_i, j = 1..n-1 (non-increasing)
        tail = np.cumsum(flat[:, ::-1], axis=1)[:, ::-1][:, 1:] * r
        tail = np.clip(tail, 0.0, r)
        base = np.minimum(np.floor(tail), r - 1)           # a coordinate at r sits on the top face
        frac = tail - base
        order = np.argsort(-frac, axis=1, kind="stable")
        sorted_frac = np.take_along_axis(frac, order, axis=1)
        m = flat.shape[0]
        weights = np.empty((m, n))
        weights[:, 0] = 1.0 - sorted_frac[:, 0]
        weights[:, 1:-1] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
        weights[:, -1] = sorted_frac[:, -1]
        verts = np.empty((m, n, n - 1))
        y = base.copy()
        verts[:, 0] = y
        for k in range(1, n):
            y = y.copy()
            y[np.arange(m), order[:, k - 1]] += 1.0
            verts[:, k] = y
        # back to counts: c_0 = r - y_1, c_j = y_j - y_{j+1}, c_{n-1} = y_{n-1}
        full = np.concatenate([np.full((m, n, 1), float(r)), verts, np.zeros((m, n, 1))], axis=2)
        counts = np.rint(full[:, :, :-1] - full[:, :, 1:]).astype(np.int64)
        idx = np.searchsorted(self._codes, _encode(counts.reshape(-1, n), r)).reshape(m, n)
        return idx.reshape(lead + (n,)), weights.reshape(lead + (n,))


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _encode(counts: np.ndarray, r: int) -> np.ndarray:
    """Base ``r + 1`` integer code of each composition (exact for the sizes the guard allows)."""
    n = counts.shape[-1]
    weights = (r + 1) ** np.arange(n - 1, -1, -1, dtype=np.float64)
    return counts.astype(np.float64) @ weights


# ---------------------------------------------------------------- belief-state dynamic programming


@dataclass(frozen=True, eq=False)
class BeliefValues:
    """Solution of the belief-state Bellman equation on a belief grid.

    Attributes:
        W: ``(n_states, n_points)`` values at grid beliefs.
        Q: ``(n_points, n_states, n_actions)`` action values at grid beliefs (``-inf`` if infeasible).
        grid: the belief grid.
        residual: sup-norm change of the last sweep.
    """

    smdp: FiniteSmdp = field(repr=False)
    grid: BeliefGrid
    W: np.ndarray
    Q: np.ndarray
    residual: float
    sweeps: int

    def value(self, s: int, mu) -> float:
        idx, w = self.grid.interpolate(mu)
        return float(np.dot(w, self.W[s, idx]))

    def action_values(self, s: int, mu) -> np.ndarray:
        """One-step lookahead at an arbitrary belief using interpolated continuation values."""
        smdp = self.smdp
        base = smdp.base
        mu = np.asarray(mu, dtype=float)
        qbar = mixture_kernel(smdp, mu)[s]                           # (X, S')
        out = np.full(base.n_actions, -np.inf)
        for x in np.flatnonzero(base.feasible[s]):
            total = 0.0
            for s2 in np.flatnonzero(qbar[x] > 0):
                post = mu * smdp.family[:, s, x, s2]
                post /= post.sum()
                total += qbar[x, s2] * (base.payoff[s, x, s2] + base.discount * self.value(s2, post))
            out[x] = total
        return out


def solve_belief_mdp(smdp: FiniteSmdp, grid: BeliefGrid, tol: float = 1e-10,
                     max_sweeps: int = 100_000) -> BeliefValues:
    """Value iteration on states x grid beliefs, with posteriors interpolated back onto the grid.

    Uses the same stopping rule as ``value_iteration``.
    """
    base = smdp.base
    if grid.n_theta != smdp.n_theta:
        raise ValueError("belief grid does not match the parameter grid")
    pts = grid.points                                               # (P, T)
    qbar = np.tensordot(pts, smdp.family, axes=(1, 0))              # (P, S, X, S')
    post = pts[:, None, None, None, :] * np.moveaxis(smdp.family, 0, -1)[None]   # (P, S, X, S', T)
    norm = post.sum(axis=-1, keepdims=True)
    live = norm[..., 0] > ZERO_LIKELIHOOD
    post = np.where(live[..., None], post / np.where(norm > 0, norm, 1.0), pts[:, None, None, None, :])
    idx, wts = grid.interpolate(post)                               # (P, S, X, S', n)
    reward = np.einsum("psxt,sxt->psx", qbar, base.payoff)
    delta = base.discount
    feasible = base.feasible[None]
    w = np.zeros((base.n_states, grid.n_points))
    stop = tol * (1 - delta) / (2 * delta) if delta > 0 else math.inf
    s_next = np.arange(base.n_states)[None, None, None, :, None]
    sweeps, change = 0, math.inf
    while sweeps < max_sweeps:
        sweeps += 1
        cont = np.sum(wts * w[s_next, idx], axis=-1)                # (P, S, X, S')
        q = reward + delta * np.sum(qbar * cont, axis=-1)
        q = np.where(feasible, q, -np.inf)
        w_new = q.max(axis=2).T
        change = float(np.max(np.abs(w_new - w)))
        w = w_new
        if change <= stop or delta == 0:
            break
    else:
        raise RuntimeError("belief-state value iteration did not converge")
    cont = np.sum(wts * w[s_next, idx], axis=-1)
    q = np.where(feasible, reward + delta * np.sum(qbar * cont, axis=-1), -np.inf)
    return BeliefValues(smdp, grid, w, q, change, sweeps)


def value_of_experimentation(smdp: FiniteSmdp, W: BeliefValues, s: int, x: int, mu) -> float:
    """Expected continuation value with updating minus the value with the belief held fixed."""
    mu = np.asarray(mu, dtype=float)
    qbar = mixture_kernel(smdp, mu)
    mdp_mu = smdp.subjective_mdp(qbar)
    v_fixed = policy_iteration(mdp_mu).values
    learn = 0.0
    for s2 in np.flatnonzero(qbar[s, x] > 0):
        learn += qbar[s, x, s2] * W.value(s2, bayes_update(smdp, mu, s, x, s2))
    return float(learn - qbar[s, x] @ v_fixed)


# ---------------------------------------------------------------- simulation


@dataclass(eq=False)
class LearningTrace:
    """Full history of one simulated agent.

    Per period ``t``: state, action, the index of the strategy ``sigma_t`` in
    ``strategies``, and a belief summary (all weights when there are at most 16
    atoms, otherwise entropy and the three heaviest atoms).  Full beliefs are
    also kept at checkpoints, and strided cumulative belief sums support window
    averages.  ``m_t`` is rebuilt on demand from the state-action counts.
    """

    smdp: FiniteSmdp = field(repr=False)
    mode: str
    seed: int
    horizon: int
    states: np.ndarray
    actions: np.ndarray
    strategy_index: np.ndarray
    strategies: np.ndarray
    beliefs: Optional[np.ndarray]
    entropy: Optional[np.ndarray]
    top_atoms: Optional[np.ndarray]
    top_weights: Optional[np.ndarray]
    checkpoints: np.ndarray
    checkpoint_beliefs: np.ndarray
    belief_stride: int
    belief_cumsum: np.ndarray
    final_belief: np.ndarray
    aborted: bool = False
    abort_reason: str = ""

    @property
    def length(self) -> int:
        return int(self.states.shape[0])

    def sigma(self, t: int) -> np.ndarray:
        return self.strategies[self.strategy_index[t]]

    def pair_index(self) -> np.ndarray:
        return self.states * self.smdp.base.n_actions + self.actions

    def m_at(self, t: int) -> np.ndarray:
        """Empirical outcome frequency over periods ``0..t``."""
        base = self.smdp.base
        counts = np.bincount(self.pair_index()[: t + 1], minlength=base.n_states * base.n_actions)
        return (counts / (t + 1)).reshape(base.feasible.shape)

    def m_path(self, start: int, stop: int) -> np.ndarray:
        """``m_t`` for ``t`` in ``[start, stop)`` as an array ``(stop - start, n_states, n_actions)``."""
        base = self.smdp.base
        n_pairs = base.n_states * base.n_actions
        pairs = self.pair_index()
        before = np.bincount(pairs[:start], minlength=n_pairs).astype(float)
        onehot = np.zeros((stop - start, n_pairs))
        onehot[np.arange(stop - start), pairs[start:stop]] = 1.0
        counts = before + np.cumsum(onehot, axis=0)
        return (counts / np.arange(start + 1, stop + 1)[:, None]).reshape((-1,) + base.feasible.shape)

    def belief_at(self, t: int) -> np.ndarray:
        if self.beliefs is not None:
            return self.beliefs[t]
        hit = np.flatnonzero(self.checkpoints == t)
        if hit.size:
            return self.checkpoint_beliefs[hit[0]]
        raise KeyError(f"full belief not stored for t={t}")

    def mean_belief(self, start: int) -> np.ndarray:
        """Average belief over periods ``start..length-1`` (start rounded down to the stride)."""
        if self.beliefs is not None:
            return self.beliefs[start:].mean(axis=0)
        k = start // self.belief_stride
        total = self.belief_cumsum[-1] - (self.belief_cumsum[k - 1] if k > 0 else 0.0)
        end = min(self.belief_cumsum.shape[0] * self.belief_stride, self.horizon)
        return total / max(end - k * self.belief_stride, 1)

    def to_csv(self) -> str:
        return trace_csv(self)


def _checkpoint_times(horizon: int, per_decade: int = 10) -> np.ndarray:
    if horizon <= 0:
        return np.zeros(0, dtype=np.int64)
    top = math.log10(max(horizon, 1))
    t = np.unique(np.round(10 ** np.linspace(0, top, max(2, int(per_decade * top) + 1))).astype(np.int64) - 1)
    t = np.unique(np.concatenate([[0], t[(t >= 0) & (t < horizon)], [horizon - 1]]))
    return t


class _Policy:
    """Strategy at the current belief for a batch of agents."""

    def __init__(self, smdp: FiniteSmdp, mode: str, grid_resolution: int, tol: float):
        if mode not in POLICY_MODES:
            raise ValueError(f"unknown policy mode {mode!r}; expected one of {POLICY_MODES}")
        self.smdp = smdp
        self.mode = mode
        base = smdp.base
        self.rewards = np.einsum("sxt,isxt->isx", base.payoff, smdp.family).reshape(smdp.n_theta, -1)
        self.values = None
        if mode == "belief-optimal":
            grid = BeliefGrid.regular(smdp.n_theta, grid_resolution)
            self.values = solve_belief_mdp(smdp, grid, tol)
        self.warm = {}

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        base = self.smdp.base
        feasible = base.feasible
        if self.mode == "belief-optimal":
            idx, w = self.values.grid.interpolate(mu)
            q = np.einsum("bn,bnsx->bsx", w, self.values.Q[idx])
            q = np.where(feasible[None], q, -np.inf)
            best = q.max(axis=2, keepdims=True)
            sets = feasible[None] & (q >= best - TIE_TOL)
            return sets / sets.sum(axis=2, keepdims=True)
        if self.mode == "myopic" or base.discount == 0.0:
            q = np.where(feasible[None], (mu @ self.rewards).reshape((-1,) + feasible.shape), -np.inf)
        else:
            q = np.stack([self._ce_q(b, m) for b, m in enumerate(mu)])
        best = q.max(axis=2, keepdims=True)
        choice = np.argmax(q >= best - TIE_TOL, axis=2)                  # lowest index on ties
        sigma = np.zeros(q.shape)
        np.put_along_axis(sigma, choice[..., None], 1.0, axis=2)
        return sigma

    def _ce_q(self, b: int, mu: np.ndarray) -> np.ndarray:
        mdp_mu = self.smdp.subjective_mdp(mixture_kernel(self.smdp, mu))
        v = policy_iteration(mdp_mu, start=self.warm.get(b))
        q = bellman_q(mdp_mu, v.values)
        self.warm[b] = np.argmax(q, axis=1)
        return q


def simulate_many(smdp: FiniteSmdp, prior, policy_mode: str, horizon: int, seeds,
                  grid_resolution: int = 20, tol: float = 1e-10, checkpoints_per_decade: int = 10) -> list:
    """Simulate one agent per seed, all in lockstep; returns traces in seed order."""
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (smdp.n_theta,) or abs(prior.sum() - 1) > 1e-12 or np.any(prior <= 0):
        raise ValueError("prior must be a full-support probability vector on the parameter grid")
    seeds = [int(s) for s in seeds]
    base = smdp.base
    nb, n_t, n_s = len(seeds), smdp.n_theta, base.n_states
    policy = _Policy(smdp, policy_mode, grid_resolution, tol)

    draws = np.empty((nb, horizon, 2))
    s0 = np.empty(nb, dtype=np.int64)
    q0_cdf = np.cumsum(base.q0)
    for b, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        s0[b] = min(int(np.searchsorted(q0_cdf, rng.random(), side="right")), n_s - 1)
        draws[b] = rng.random((horizon, 2))

    full_beliefs = n_t <= 16
    states = np.zeros((nb, horizon), dtype=np.int64)
    actions = np.zeros((nb, horizon), dtype=np.int64)
    strat_idx = np.zeros((nb, horizon), dtype=np.int64)
    beliefs = np.zeros((nb, horizon, n_t)) if full_beliefs else None
    entropy = None if full_beliefs else np.zeros((nb, horizon))
    top_atoms = None if full_beliefs else np.zeros((nb, horizon, 3), dtype=np.int64)
    top_weights = None if full_beliefs else np.zeros((nb, horizon, 3))
    checkpoints = _checkpoint_times(horizon, checkpoints_per_decade)
    cp_pos = {int(t): i for i, t in enumerate(checkpoints)}
    cp_beliefs = np.zeros((nb, checkpoints.size, n_t))
    stride = max(1, horizon // 1000)
    cumsum = np.zeros((nb, (horizon + stride - 1) // stride, n_t))
    running = np.zeros((nb, n_t))

    tables = [dict() for _ in range(nb)]
    strategies = [[] for _ in range(nb)]
    last_sigma = None
    last_idx = np.zeros(nb, dtype=np.int64)

    mu = np.tile(prior, (nb, 1))
    s = s0.copy()
    alive = np.ones(nb, dtype=bool)
    length = np.full(nb, horizon, dtype=np.int64)
    reasons = [""] * nb
    kernel_cdf = np.cumsum(base.kernel, axis=2)
    rows = np.arange(nb)
    family_t = np.moveaxis(smdp.family, 0, -1)                       # (S, X, S', T)
    for t in range(horizon):
        sigma = policy(mu)                                            # (B, S, X)
        changed = np.ones(nb, dtype=bool) if last_sigma is None else np.any(sigma != last_sigma, axis=(1, 2))
        for b in np.flatnonzero(changed & alive):
            key = sigma[b].tobytes()
            if key not in tables[b]:
                tables[b][key] = len(strategies[b])
                strategies[b].append(sigma[b].copy())
            last_idx[b] = tables[b][key]
        last_sigma = sigma
        strat_idx[:, t] = last_idx
        row = sigma[rows, s]                                          # (B, X)
        x = np.minimum((draws[:, t, 0][:, None] >= np.cumsum(row, axis=1)).sum(axis=1), base.n_actions - 1)
        x = np.where(row[rows, x] > 0, x, np.argmax(row, axis=1))
        cdf = kernel_cdf[s, x]
        s_next = np.minimum((draws[:, t, 1][:, None] >= cdf).sum(axis=1), n_s - 1)
        states[:, t] = s
        actions[:, t] = x
        if full_beliefs:
            beliefs[:, t] = mu
        else:
            entropy[:, t] = -np.einsum("bt,bt->b", mu, np.log(np.maximum(mu, 1e-300)))
            scratch = mu.copy()
            for k in range(3):                                        # heaviest first, lowest index on ties
                top = np.argmax(scratch, axis=1)
                top_atoms[:, t, k] = top
                top_weights[:, t, k] = mu[rows, top]
                scratch[rows, top] = -1.0
        if t in cp_pos:
            cp_beliefs[:, cp_pos[t]] = mu
        running += mu
        if (t + 1) % stride == 0 or t == horizon - 1:
            cumsum[:, t // stride] = running
        lik = family_t[s, x, s_next]                                  # (B, T)
        post = mu * lik
        total = post.sum(axis=1)
        bad = alive & (total <= ZERO_LIKELIHOOD)
        for b in np.flatnonzero(bad):
            alive[b] = False
            length[b] = t + 1
            reasons[b] = f"zero-likelihood observation at t={t}"
        if alive.all():
            mu = post / total[:, None]
            s = s_next
        else:
            total = np.where(total > ZERO_LIKELIHOOD, total, 1.0)
            mu = np.where(alive[:, None], post / total[:, None], mu)
            s = np.where(alive, s_next, s)

    traces = []
    for b, seed in enumerate(seeds):
        n = int(length[b])
        keep = checkpoints < n
        traces.append(LearningTrace(
            smdp, policy_mode, seed, horizon, states[b, :n].copy(), actions[b, :n].copy(),
            strat_idx[b, :n].copy(), np.array(strategies[b]),
            beliefs[b, :n].copy() if full_beliefs else None,
            None if full_beliefs else entropy[b, :n].copy(),
            None if full_beliefs else top_atoms[b, :n].copy(),
            None if full_beliefs else top_weights[b, :n].copy(),
            checkpoints[keep], cp_beliefs[b, keep], stride,
            cumsum[b, : (n + stride - 1) // stride].copy(), mu[b].copy(),
            not alive[b], reasons[b]))
    return traces


def simulate(smdp: FiniteSmdp, prior, policy_mode: str, horizon: int, seed: int, **kwargs) -> LearningTrace:
    """Simulate one agent; deterministic given ``seed``."""
    return simulate_many(smdp, prior, policy_mode, horizon, [seed], **kwargs)[0]


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class StabilityVerdict:
    """``stable`` with the limit ``(sigma, m)``, or undetermined (``sigma``/``m`` None)."""

    stable: bool
    sigma: Optional[np.ndarray]
    m: Optional[np.ndarray]
    exhaustive: Optional[bool]
    sigma_oscillation: float
    m_oscillation: float
    window: int
    mean_belief: Optional[np.ndarray] = None


def detect_stability(trace: LearningTrace, window: Optional[int] = None, tol: float = 1e-3) -> StabilityVerdict:
    """Stable when ``sigma_t`` and ``m_t`` each move less than ``tol`` over the last ``window`` periods."""
    n = trace.length
    if window is None:
        window = max(2, n // 10)
    if window < 2:
        raise ValueError("window must be at least 2")
    if n < 2:
        return StabilityVerdict(False, None, None, None, math.inf, math.inf, n)
    window = min(window, n)
    start = n - window
    used = np.unique(trace.strategy_index[start:])
    sig = trace.strategies[used]
    sig_osc = float(np.max(sig.max(axis=0) - sig.min(axis=0)))
    path = trace.m_path(start, n)
    m_osc = float(np.max(path.max(axis=0) - path.min(axis=0)))
    if sig_osc <= tol and m_osc <= tol:
        mean_mu = trace.mean_belief(start)
        return StabilityVerdict(True, trace.sigma(n - 1).copy(), path[-1].copy(),
                                exhaustive_learning_check(trace.smdp, mean_mu), sig_osc, m_osc, window, mean_mu)
    return StabilityVerdict(False, None, None, None, sig_osc, m_osc, window)


def grid_spacing(smdp: FiniteSmdp) -> float:
    """Largest per-axis gap between neighbouring distinct grid coordinates."""
    gaps = []
    for axis in smdp.theta_grid.T:
        u = np.unique(axis)
        if u.size > 1:
            gaps.append(float(np.min(np.diff(u))))
    return max(gaps) if gaps else 0.0


@dataclass(frozen=True)
class ConcentrationRecord:
    t: int
    mass: float
    minimizers: np.ndarray


def limit_estimate(m, negligible: float) -> np.ndarray:
    """``m`` with pairs of frequency below ``negligible`` dropped and the rest renormalized.

    Pairs visited only finitely often have frequency of order ``1/t``; they carry
    no weight in the limit, and keeping them would pin down parameters that the
    long-run data cannot identify.
    """
    m = np.asarray(m, dtype=float)
    kept = np.where(m >= negligible, m, 0.0)
    return kept / kept.sum() if kept.sum() > 0 else m


def concentration_diagnostic(trace: LearningTrace, smdp: Optional[FiniteSmdp] = None, eta: Optional[float] = None,
                             times=None, negligible: float = 1e-3) -> list:
    """Posterior mass within ``eta`` of the closest-parameter set of ``m_t`` at checkpoints.

    Checkpoints default to ``t = 10^2, 10^3, ...`` plus the final period; ``eta``
    defaults to twice the grid spacing.  The set is computed for ``m_t`` with
    pairs rarer than ``negligible`` removed (see ``limit_estimate``); pass 0 to
    use ``m_t`` as is.
    """
    smdp = smdp or trace.smdp
    eta = 2 * grid_spacing(smdp) if eta is None else eta
    n = trace.length
    if times is None:
        times = [10 ** k for k in range(2, 20) if 10 ** k < n] + [n - 1]
        stored = set(int(t) for t in trace.checkpoints)
        times = [t if t in stored or trace.beliefs is not None else _nearest(trace.checkpoints, t) for t in times]
    out = []
    grid = smdp.theta_grid
    for t in times:
        m = limit_estimate(trace.m_at(t), negligible)
        try:
            members = minimizer_set(smdp, m).minimizer_set
        except NoFiniteDivergence:
            out.append(ConcentrationRecord(int(t), 0.0, np.zeros(0, dtype=np.int64)))
            continue
        d = np.min(np.linalg.norm(grid[:, None, :] - grid[None, members, :], axis=2), axis=1)
        mu = trace.belief_at(t)
        out.append(ConcentrationRecord(int(t), float(mu[d <= eta + 1e-12].sum()), members))
    return out


def _nearest(values, t):
    values = np.asarray(values)
    return int(values[np.argmin(np.abs(values - t))])


def stable_certificate(smdp: FiniteSmdp, verdict: StabilityVerdict, tols: Optional[Tolerances] = None):
    """Best equilibrium certificate for a stable verdict over beliefs on the closest-parameter set.

    Tries the window-average belief restricted to the set, then each point mass
    in the set; returns the accepted one or the one with the smallest residuals.
    """
    tols = tols or Tolerances()
    m = verdict.m
    try:
        mask = minimizer_set(smdp, m, tols.tol_k).mask()
    except NoFiniteDivergence:
        return verify(smdp, verdict.sigma, m, verdict.mean_belief, tols)
    candidates = []
    if verdict.mean_belief is not None and verdict.mean_belief[mask].sum() > 0:
        mu = np.where(mask, verdict.mean_belief, 0.0)
        candidates.append(mu / mu.sum())
    candidates += [point_mass(smdp.n_theta, i) for i in np.flatnonzero(mask)]
    best = None
    for mu in candidates:
        cert = verify(smdp, verdict.sigma, m, mu, tols)
        if cert.accepted:
            return cert
        score = max(cert.residual_optimality, cert.residual_belief, cert.residual_stationarity)
        if best is None or score < best[0]:
            best = (score, cert)
    return best[1]


# ---------------------------------------------------------------- CSV


def _belief_columns(smdp: FiniteSmdp) -> list:
    if smdp.n_theta <= 16:
        return [f"mu_{i}" for i in range(smdp.n_theta)]
    return ["entropy", "top1", "w1", "top2", "w2", "top3", "w3"]


def trace_csv(trace: LearningTrace, every: int = 1) -> str:
    """CSV with one row per period (or every ``every`` periods)."""
    base = trace.smdp.base
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    pair_names = [f"m[{base.states[s]}|{base.actions[x]}]" for s, x in base.pairs]
    writer.writerow(["t", "state", "action"] + _belief_columns(trace.smdp) + pair_names)
    pairs = trace.pair_index()
    n_pairs = base.n_states * base.n_actions
    counts = np.zeros(n_pairs)
    flat_pairs = base.pairs[:, 0] * base.n_actions + base.pairs[:, 1]
    for t in range(trace.length):
        counts[pairs[t]] += 1
        if t % every and t != trace.length - 1:
            continue
        if trace.beliefs is not None:
            belief = [repr(float(v)) for v in trace.beliefs[t]]
        else:
            belief = [repr(float(trace.entropy[t]))]
            for a, w in zip(trace.top_atoms[t], trace.top_weights[t]):
                belief += [str(int(a)), repr(float(w))]
        m = counts[flat_pairs] / (t + 1)
        writer.writerow([t, base.states[trace.states[t]], base.actions[trace.actions[t]]] + belief
                        + [repr(float(v)) for v in m])
    return buf.getvalue()
