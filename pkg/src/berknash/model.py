"""Domain types for finite (subjective) Markov decision processes.

States and actions carry string names for reporting; all arithmetic uses dense
index arrays.  Kernels are stored as ``(n_states, n_actions, n_states)`` arrays
whose infeasible rows are zero, so a feasible pair ``(s, x)`` always has a
probability row ``kernel[s, x]``.

Strategies, beliefs and outcome distributions are plain numpy arrays:

* strategy: ``(n_states, n_actions)``, rows on the feasible actions;
* belief: ``(n_theta,)`` weights over the parameter grid;
* outcome distribution: ``(n_states, n_actions)`` mass on feasible pairs.
"""

from __future__ import annotations

import itertools
from functools import cached_property
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

PROB_TOL = 1e-12


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """A finite Markov decision process.

    Attributes:
        states: state names, in index order.
        actions: action names, in index order.
        feasible: boolean ``(n_states, n_actions)`` feasibility mask.
        q0: initial state distribution.
        kernel: transition probabilities ``kernel[s, x, s_next]``.
        payoff: per-period payoff ``payoff[s, x, s_next]``.
        discount: discount factor in ``[0, 1)``.
    """

    states: tuple
    actions: tuple
    feasible: np.ndarray
    q0: np.ndarray
    kernel: np.ndarray
    payoff: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(str(x) for x in self.actions))
        object.__setattr__(self, "feasible", _readonly(self.feasible, bool))
        object.__setattr__(self, "q0", _readonly(self.q0))
        object.__setattr__(self, "kernel", _readonly(self.kernel))
        object.__setattr__(self, "payoff", _readonly(self.payoff))
        object.__setattr__(self, "discount", float(self.discount))
        n_s, n_x = len(self.states), len(self.actions)
        if self.feasible.shape != (n_s, n_x):
            raise ValueError(f"feasible mask has shape {self.feasible.shape}, expected {(n_s, n_x)}")
        for name in ("kernel", "payoff"):
            if getattr(self, name).shape != (n_s, n_x, n_s):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(n_s, n_x, n_s)}")
        if self.q0.shape != (n_s,):
            raise ValueError(f"q0 has shape {self.q0.shape}, expected {(n_s,)}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @cached_property
    def pairs(self) -> np.ndarray:
        """Feasible ``(s, x)`` pairs as an ``(n_pairs, 2)`` index array, row-major order."""
        return np.argwhere(self.feasible)

    @cached_property
    def expected_payoff(self) -> np.ndarray:
        """``r[s, x] = sum_s' payoff[s, x, s'] * kernel[s, x, s']``."""
        return np.einsum("sxt,sxt->sx", self.payoff, self.kernel)

    @cached_property
    def max_abs_payoff(self) -> float:
        mask = np.broadcast_to(self.feasible[:, :, None], self.payoff.shape)
        vals = np.abs(self.payoff[mask])
        return float(vals.max()) if vals.size else 0.0

    def with_kernel(self, kernel) -> "FiniteMdp":
        return FiniteMdp(self.states, self.actions, self.feasible, self.q0, kernel, self.payoff, self.discount)

    def with_discount(self, discount: float) -> "FiniteMdp":
        return FiniteMdp(self.states, self.actions, self.feasible, self.q0, self.kernel, self.payoff, discount)

    def state_index(self, name: str) -> int:
        return self.states.index(str(name))

    def action_index(self, name: str) -> int:
        return self.actions.index(str(name))


@dataclass(frozen=True, eq=False)
class FiniteSmdp:
    """A finite MDP together with a gridded family of subjective kernels.

    Attributes:
        base: the true MDP (its kernel is the true transition law).
        theta_grid: ``(n_theta, d)`` parameter points.
        family: ``family[i, s, x, s_next]`` is the kernel at ``theta_grid[i]``.
        kernel_fn: optional map from a parameter vector to a kernel array.  When
            present the grid can be refined or augmented.
        theta_bounds: optional ``(d, 2)`` box containing admissible parameters.
    """

    base: FiniteMdp
    theta_grid: np.ndarray
    family: np.ndarray
    kernel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    theta_bounds: Optional[np.ndarray] = None
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        grid = np.array(self.theta_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        object.__setattr__(self, "theta_grid", _readonly(grid))
        object.__setattr__(self, "family", _readonly(self.family))
        if self.theta_bounds is not None:
            object.__setattr__(self, "theta_bounds", _readonly(np.atleast_2d(self.theta_bounds)))
        expected = (grid.shape[0],) + self.base.kernel.shape
        if self.family.shape != expected:
            raise ValueError(f"family has shape {self.family.shape}, expected {expected}")

    @property
    def n_theta(self) -> int:
        return self.theta_grid.shape[0]

    def subjective_mdp(self, kernel) -> FiniteMdp:
        """The MDP the agent solves when it believes ``kernel``."""
        return self.base.with_kernel(kernel)

    def with_discount(self, discount: float) -> "FiniteSmdp":
        return FiniteSmdp(self.base.with_discount(discount), self.theta_grid, self.family,
                          self.kernel_fn, self.theta_bounds)


@dataclass(frozen=True)
class ValidationReport:
    """Violated invariants, one message per issue; empty when the model is valid."""

    issues: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self):
        return "valid" if self.ok else "\n".join(self.issues)


REGULARITY_FAILED = "regularity surrogate failed"


def _row_issues(kernel, feasible, states, actions, label, tol):
    issues = []
    for s, x in np.argwhere(feasible):
        row = kernel[s, x]
        total = row.sum()
        if np.any(row < -tol) or abs(total - 1.0) > tol:
            issues.append(f"{label} row ({states[s]}, {actions[x]}) is not a probability vector "
                          f"(sum={total:.15g}, min={row.min():.3g})")
    for s, x in np.argwhere(~feasible):
        if np.any(kernel[s, x] != 0.0):
            issues.append(f"{label} row ({states[s]}, {actions[x]}) is infeasible but nonzero")
    return issues


def validate(model, tol: float = PROB_TOL) -> ValidationReport:
    """Check the invariants of a ``FiniteMdp`` or ``FiniteSmdp`` without mutating it."""
    smdp = model if isinstance(model, FiniteSmdp) else None
    mdp = smdp.base if smdp is not None else model
    issues = []
    for s in np.flatnonzero(~mdp.feasible.any(axis=1)):
        issues.append(f"state {mdp.states[s]} has no feasible action")
    if np.any(mdp.q0 < -tol) or abs(mdp.q0.sum() - 1.0) > tol:
        issues.append(f"q0 is not a probability vector (sum={mdp.q0.sum():.15g})")
    if not (0.0 <= mdp.discount < 1.0):
        issues.append(f"discount {mdp.discount} is outside [0, 1)")
    if not np.all(np.isfinite(mdp.payoff)):
        issues.append("payoff has non-finite entries")
    issues += _row_issues(mdp.kernel, mdp.feasible, mdp.states, mdp.actions, "kernel", tol)
    if smdp is not None:
        for i in range(smdp.n_theta):
            for msg in _row_issues(smdp.family[i], mdp.feasible, mdp.states, mdp.actions,
                                   f"family[{i}]", tol):
                issues.append(msg)
        # one grid point must put positive mass wherever the truth does
        truth_pos = (mdp.kernel > 0) & mdp.feasible[:, :, None]
        compatible = np.all((smdp.family > 0) | ~truth_pos[None], axis=(1, 2, 3))
        if not compatible.any():
            issues.append(REGULARITY_FAILED + ": no grid point is positive wherever the true kernel is")
    return ValidationReport(tuple(issues))


def mixture_kernel(smdp: FiniteSmdp, mu) -> np.ndarray:
    """Subjective mixture kernel ``sum_theta mu(theta) Q_theta``."""
    mu = np.asarray(mu, dtype=float)
    support = np.flatnonzero(mu)
    return np.tensordot(mu[support], smdp.family[support], axes=(0, 0))


# ---------------------------------------------------------------- strategies


def uniform_strategy(mdp: FiniteMdp) -> np.ndarray:
    feas = mdp.feasible.astype(float)
    return feas / feas.sum(axis=1, keepdims=True)


def pure_strategy(mdp: FiniteMdp, choice: Sequence[int]) -> np.ndarray:
    sigma = np.zeros(mdp.feasible.shape)
    sigma[np.arange(mdp.n_states), np.asarray(choice)] = 1.0
    return sigma


def pure_strategies(mdp: FiniteMdp):
    """Iterate over all pure strategies (product of feasible sets)."""
    options = [np.flatnonzero(row) for row in mdp.feasible]
    for choice in itertools.product(*options):
        yield pure_strategy(mdp, choice)


def count_pure_strategies(mdp: FiniteMdp) -> int:
    return int(np.prod(mdp.feasible.sum(axis=1).astype(float)))


def strategy_issues(mdp: FiniteMdp, sigma, tol: float = PROB_TOL) -> list:
    sigma = np.asarray(sigma, dtype=float)
    issues = []
    if sigma.shape != mdp.feasible.shape:
        return [f"strategy has shape {sigma.shape}, expected {mdp.feasible.shape}"]
    if np.any(sigma[~mdp.feasible] != 0.0):
        issues.append("strategy puts mass on infeasible actions")
    if np.any(sigma < -tol):
        issues.append("strategy has negative entries")
    bad = np.flatnonzero(np.abs(sigma.sum(axis=1) - 1.0) > tol)
    issues += [f"strategy row {mdp.states[s]} does not sum to 1" for s in bad]
    return issues


def distribution_issues(mdp: FiniteMdp, m, tol: float = PROB_TOL) -> list:
    m = np.asarray(m, dtype=float)
    if m.shape != mdp.feasible.shape:
        return [f"outcome distribution has shape {m.shape}, expected {mdp.feasible.shape}"]
    issues = []
    if np.any(m[~mdp.feasible] != 0.0):
        issues.append("outcome distribution puts mass on infeasible pairs")
    if np.any(m < -tol) or abs(m.sum() - 1.0) > tol:
        issues.append("outcome distribution is not a probability vector")
    return issues


def belief_issues(smdp: FiniteSmdp, mu, tol: float = PROB_TOL) -> list:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (smdp.n_theta,):
        return [f"belief has shape {mu.shape}, expected {(smdp.n_theta,)}"]
    if np.any(mu < -tol) or abs(mu.sum() - 1.0) > tol:
        return ["belief is not a probability vector"]
    return []


def perturb_strategy(sigma, feasible, epsilon: float) -> np.ndarray:
    """Map a strategy into the set of strategies with every feasible action at least ``epsilon``.

    Each row becomes ``epsilon + (1 - k * epsilon) * sigma`` with ``k`` the number of
    feasible actions, so an optimal strategy maps to one that puts all mass above
    the floor on the same optimal actions.
    """
    sigma = np.asarray(sigma, dtype=float)
    if epsilon <= 0:
        return sigma.copy()
    k = feasible.sum(axis=1, keepdims=True)
    out = epsilon + (1.0 - k * epsilon) * sigma
    return np.where(feasible, out, 0.0)


def normalize_rows(rows, tol: float = PROB_TOL):
    """Renormalize probability rows that are within ``tol`` of summing to one.

    Returns the renormalized array and the indices of rows beyond tolerance
    (left unchanged).
    """
    rows = np.array(rows, dtype=float)
    sums = rows.sum(axis=-1)
    bad = np.argwhere((np.abs(sums - 1.0) > tol) | np.any(rows < -tol, axis=-1))
    ok = np.abs(sums - 1.0) <= tol
    rows = np.where(ok[..., None], np.clip(rows, 0.0, None) / np.where(ok, sums, 1.0)[..., None], rows)
    return rows, bad


# ---------------------------------------------------------------- grids


def uniform_grid(bounds, points_per_axis) -> np.ndarray:
    """Rectangular grid over a box: ``bounds`` is ``[(lo, hi), ...]``, one entry per axis."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    counts = np.broadcast_to(np.asarray(points_per_axis), (bounds.shape[0],))
    axes = [np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(bounds, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def augment_grid(smdp: FiniteSmdp, points, dedup_tol: float = 1e-14) -> FiniteSmdp:
    """Append parameter points to the grid, building their kernels with ``kernel_fn``.

    Existing indices are preserved so beliefs on the old grid remain valid after
    zero-padding.  Points already present (within ``dedup_tol``) are skipped.
    """
    if smdp.kernel_fn is None:
        raise ValueError("grid augmentation needs a model with a kernel_fn")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    new_pts, new_kernels = [], []
    grid = smdp.theta_grid
    for p in points:
        if smdp.theta_bounds is not None:
            p = np.clip(p, smdp.theta_bounds[:, 0], smdp.theta_bounds[:, 1])
        if np.any(np.max(np.abs(grid - p), axis=1) <= dedup_tol):
            continue
        if any(np.max(np.abs(q - p)) <= dedup_tol for q in new_pts):
            continue
        new_pts.append(p)
        new_kernels.append(np.asarray(smdp.kernel_fn(p), dtype=float))
    if not new_pts:
        return smdp
    out = FiniteSmdp(smdp.base, np.vstack([grid, np.array(new_pts)]),
                     np.concatenate([smdp.family, np.array(new_kernels)]),
                     smdp.kernel_fn, smdp.theta_bounds)
    out.cache["parent"] = smdp    # lets cached per-grid-point tables be extended
    return out


def pad_belief(mu, n_theta: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] == n_theta:
        return mu.copy()
    out = np.zeros(n_theta)
    out[: mu.shape[0]] = mu
    return out


def find_theta(smdp: FiniteSmdp, point, tol: float = 1e-12) -> int:
    """Index of the grid point equal to ``point`` within ``tol``, or -1."""
    d = np.max(np.abs(smdp.theta_grid - np.asarray(point, dtype=float)), axis=1)
    i = int(np.argmin(d))
    return i if d[i] <= tol else -1


def point_mass(n: int, i: int) -> np.ndarray:
    mu = np.zeros(n)
    mu[i] = 1.0
    return mu
