"""Repeated coin flips: two states (heads, tails) and a single action."""

from __future__ import annotations

import numpy as np

from ..model import FiniteMdp, FiniteSmdp


def _coin_kernel(p_heads: float) -> np.ndarray:
    k = np.empty((2, 1, 2))
    k[:, 0, 0] = p_heads
    k[:, 0, 1] = 1.0 - p_heads
    return k


def coin_build(p_heads: float = 0.5, thetas=(0.25, 0.75)) -> FiniteSmdp:
    """Coin with true heads probability ``p_heads``; the agent considers ``thetas``."""
    thetas = np.asarray(thetas, dtype=float)
    mdp = FiniteMdp(("H", "T"), ("flip",), np.ones((2, 1), bool), np.array([p_heads, 1 - p_heads]),
                    _coin_kernel(p_heads), np.zeros((2, 1, 2)), 0.0)
    family = np.array([_coin_kernel(t) for t in thetas])
    return FiniteSmdp(mdp, thetas, family, lambda t: _coin_kernel(float(np.atleast_1d(t)[0])),
                      np.array([[0.0, 1.0]]))
