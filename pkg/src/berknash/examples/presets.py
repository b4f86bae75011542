"""Named example models for the command line and the regression suites."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import FiniteSmdp
from .coin import coin_build
from .experimentation import experimentation_build
from .growth import GrowthParams, growth_build
from .monopoly import MonopolyParams, monopoly_build
from .search import default_params, search_build


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    build: Callable[[], FiniteSmdp]
    params: object = None


def _search_preset() -> Preset:
    p = default_params()
    return Preset("search-default", "job search, 201 wages, two-point fundamental with Cov < 0",
                  lambda: search_build(p), p)


def _presets() -> dict:
    mono = MonopolyParams()
    growth = GrowthParams()
    entries = [
        Preset("monopoly-default", "monopoly with H/L = 1.4 (interior regime), delta = 0.5",
               lambda: monopoly_build(mono), mono),
        _search_preset(),
        Preset("growth-default", "stochastic growth, 31 income bins x 2 shocks, 5 investment fractions",
               lambda: growth_build(growth), growth),
        Preset("experimentation-075", "one-shot investment with an option to learn, delta = 0.9 > 3/4",
               lambda: experimentation_build(0.9), 0.9),
        Preset("coin-fair", "fair coin, agent considers heads probability 1/4 or 3/4",
               lambda: coin_build(0.5, (0.25, 0.75)), (0.5, (0.25, 0.75))),
    ]
    return {p.name: p for p in entries}


PRESET_NAMES = tuple(_presets())


def get_preset(name: str) -> Preset:
    presets = _presets()
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(presets)}")
    return presets[name]


def build_preset(name: str) -> FiniteSmdp:
    return get_preset(name).build()


def uniform_prior(smdp: FiniteSmdp) -> np.ndarray:
    return np.full(smdp.n_theta, 1.0 / smdp.n_theta)
