"""Hosting capacity of distribution feeders under flexible connections."""

from .capacity import CapacitySeries, capacity_copperplate, order_stat, series_from_residual
from .cf import CfPlan, solve_cf, solve_cf_bounded, sweep_cf
from .data_model import (
    FeederModel,
    Line,
    LoadSet,
    NewLoadSpec,
    TimeGrid,
    load_csv,
    load_feeder_json,
    load_profile_csv,
    scale_case_study,
    synth_ev_profile,
    synth_feeder,
    synth_loads,
    write_csv,
)
from .df import DfPlan, check_a4, check_thm3, minimal_delays, select_events, solve_df, solve_df_lp
from .errors import *  # noqa: F401,F403
from .network import ImpedanceMatrices, build_impedance, capacity_network
from .tail import (
    TailModel,
    depth_requirements,
    exact_tail_prob,
    expected_capacity,
    fit_tail,
    marginal_gains,
    monte_carlo_validate,
    poisson_tail_prob,
    sample_tail,
)

__version__ = "0.1.0"
