"""One-shot investment with an option to learn first.

At ``init`` the agent picks A, B, S or O.  A pays 1 when ``theta = 0``, B pays 1
when ``theta = 1``, S pays 2/3, and each ends the problem.  O costs 1/3 and
reveals ``theta``: the next state is ``s_A`` when ``theta = 1`` and ``s_B`` when
``theta = 0``.  There the agent takes a safe 2/3 or a risky bet paying 3 with
the probability A (at ``s_A``) or B (at ``s_B``) would have paid.

Payoffs that depend on ``theta`` are routed through a ``win`` state so the
uncertainty lives in the transitions: a winning bet moves to ``win`` and
collects its prize on that transition, a losing one moves to ``end``.
"""

from __future__ import annotations

import numpy as np

from ..model import FiniteMdp, FiniteSmdp

STATES = ("init", "s_A", "s_B", "win", "end")
ACTIONS = ("A", "B", "S", "O", "safe", "risky", "rest")
INIT, S_A, S_B, WIN, END = range(5)
A, B, S, O, SAFE, RISKY, REST = range(7)


def _feasible() -> np.ndarray:
    f = np.zeros((5, 7), bool)
    f[INIT, [A, B, S, O]] = True
    f[[S_A, S_B], SAFE] = True
    f[[S_A, S_B], RISKY] = True
    f[[WIN, END], REST] = True
    return f


def experimentation_kernel(theta: float) -> np.ndarray:
    """Transitions when the parameter is ``theta`` (a probability in ``[0, 1]``)."""
    t = float(np.atleast_1d(theta)[0])
    k = np.zeros((5, 7, 5))
    k[INIT, A, WIN], k[INIT, A, END] = 1 - t, t
    k[INIT, B, WIN], k[INIT, B, END] = t, 1 - t
    k[INIT, S, END] = 1.0
    k[INIT, O, S_A], k[INIT, O, S_B] = t, 1 - t
    for s in (S_A, S_B):
        k[s, SAFE, END] = 1.0
    k[S_A, RISKY, WIN], k[S_A, RISKY, END] = 1 - t, t
    k[S_B, RISKY, WIN], k[S_B, RISKY, END] = t, 1 - t
    k[WIN, REST, END] = 1.0
    k[END, REST, END] = 1.0
    return k


def _payoff() -> np.ndarray:
    pay = np.zeros((5, 7, 5))
    pay[INIT, A, WIN] = 1.0
    pay[INIT, B, WIN] = 1.0
    pay[INIT, S, END] = 2 / 3
    pay[INIT, O, :] = -1 / 3
    pay[S_A, SAFE, END] = pay[S_B, SAFE, END] = 2 / 3
    pay[S_A, RISKY, WIN] = pay[S_B, RISKY, WIN] = 3.0
    return pay


def experimentation_build(delta: float = 0.9, theta_star: int = 1) -> FiniteSmdp:
    """Correctly specified model on ``Theta = {0, 1}`` with truth ``theta_star``."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if theta_star not in (0, 1):
        raise ValueError("theta_star must be 0 or 1")
    q0 = np.zeros(5)
    q0[INIT] = 1.0
    mdp = FiniteMdp(STATES, ACTIONS, _feasible(), q0, experimentation_kernel(theta_star), _payoff(), delta)
    grid = np.array([[0.0], [1.0]])
    family = np.array([experimentation_kernel(0.0), experimentation_kernel(1.0)])
    return FiniteSmdp(mdp, grid, family, experimentation_kernel, np.array([[0.0, 1.0]]))


# ---------------------------------------------------------------- closed forms


def belief_value_init(mu: float, delta: float) -> float:
    """``W(init, mu)`` with ``mu`` the probability of ``theta = 1``."""
    return max(1 - mu, mu, 2 / 3, -1 / 3 + delta * 2 / 3)


def fixed_belief_option_value(mu: float, delta: float) -> float:
    """Value of O when the agent keeps the belief ``mu`` forever."""
    return -1 / 3 + delta * (mu * max(2 / 3, 3 * (1 - mu)) + (1 - mu) * max(2 / 3, 3 * mu))


def value_of_option_experimentation(mu: float) -> float:
    """Learning value minus fixed-belief value of O; equals ``2/3 - 6 mu (1 - mu)`` on ``[2/9, 7/9]``."""
    return 2 / 3 - (mu * max(2 / 3, 3 * (1 - mu)) + (1 - mu) * max(2 / 3, 3 * mu))
