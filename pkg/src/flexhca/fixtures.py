"""Reproducible synthetic cases used by the experiment scripts and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import FeederModel, LoadSet, NewLoadSpec, TimeGrid, synth_ev_profile, synth_feeder, synth_loads

YEAR_PEAK_KW = 1530.0
YEAR_P0_MAX_KW = 1683.0
YEAR_ALPHA = 1.10


@dataclass(frozen=True)
class YearCase:
    loads: LoadSet
    spec: NewLoadSpec
    p0_max: float


def year_case(seed: int = 7, T: int | None = None) -> YearCase:
    """One year of 15-minute aggregate load with a heavy-ish right tail.

    Peak 1530 kW, transformer limit 1683 kW (10% above the peak), tail
    exponent 1.10 above the 90th percentile, overnight EV-like new load.
    """
    grid = TimeGrid.full_year() if T is None else TimeGrid(T)
    loads = synth_loads(1, grid, seed, YEAR_PEAK_KW, YEAR_ALPHA)
    return YearCase(loads, synth_ev_profile(grid, seed), YEAR_P0_MAX_KW)


@dataclass(frozen=True)
class FeederCase:
    loads: LoadSet
    feeder: FeederModel
    spec: NewLoadSpec


def feeder_case(n_buses: int = 123, T: int = 672, seed: int = 3, v_lower: float = 0.95) -> FeederCase:
    """Radial feeder with per-bus loads (unscaled, 1 kW aggregate peak).

    The new load attaches at the electrically farthest bus.
    """
    grid = TimeGrid(T)
    feeder = synth_feeder(n_buses, seed, p0_max_kw=1.0, v_lower=v_lower)
    loads = synth_loads(n_buses, grid, seed, 1.0, YEAR_ALPHA)
    from .network import build_impedance

    far = feeder.load_buses[int(np.argmax(np.diag(build_impedance(feeder).R)))]
    return FeederCase(loads, feeder, synth_ev_profile(grid, seed, attach_bus=far))
