"""Equilibrium analysis for agents who learn with a misspecified Markov model."""

__version__ = "0.1.0"

from .model import FiniteMdp, FiniteSmdp, mixture_kernel, validate

__all__ = ["FiniteMdp", "FiniteSmdp", "mixture_kernel", "validate"]
