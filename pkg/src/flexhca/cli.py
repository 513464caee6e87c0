"""Command-line front end.

Every subcommand writes plain CSV/JSON into ``--out`` (atomically, via a
temporary file and rename) together with ``manifest.json`` naming the axes
of each plot-data file, and ``report.json``. Outputs contain no timestamps,
so identical inputs and seed give byte-identical files.

Exit codes: 0 success, 1 validation failed, 2 configuration / input error,
3 infeasible instance, 4 modelling assumption violated.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import CapacitySeries, capacity_copperplate, format_capacity_csv
from .cf import depth_histogram, gain_percent, solve_cf, sweep_cf
from .data_model import (
    LoadSet,
    NewLoadSpec,
    TimeGrid,
    feeder_from_dict,
    format_load_csv,
    format_number,
    load_csv,
    load_profile_csv,
    scale_case_study,
)
from .df import check_thm3, delay_histogram, minimal_delays, solve_df
from .errors import (
    AssumptionViolated,
    ConfigError,
    EventNearHorizonEnd,
    FlexHcaError,
    Infeasible,
    InvalidFeeder,
    MalformedCsv,
)
from .network import build_impedance, capacity_network, node_voltages
from .tail import (
    TailModel,
    binned_density,
    depth_requirements,
    expected_capacity,
    fit_tail,
    marginal_gains,
    monte_carlo_validate,
)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ASSUMPTION = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    loads: str | None = None
    feeder: str | None = None
    profile: str | None = None
    attach_bus: str | int | None = None
    mode: str = "copperplate"
    k: int | None = None
    k_sweep: list | None = None
    d: list | None = None
    mu: list | None = None
    seed: int = 0
    out: str = "out"
    restrict_candidates: bool = False
    horizon: str = "strict"
    cap_at_capacity: bool = False
    p0_max: float | None = None
    slot_minutes: int = 15
    slots: int | None = None
    jobs: int = 1
    n_trials: int = 10_000
    cutoff_percentile: float = 90.0
    fit_method: str = "mle"
    margin: float = 0.0
    bins: int = 50
    headroom_fraction: float = 0.10
    tail_model: str | None = None
    minimal_delays: bool = True

    def validate(self, command: str) -> None:
        if self.mode not in ("copperplate", "network"):
            raise ConfigError(f"mode must be copperplate or network, got {self.mode!r}")
        if self.mode == "network" and not self.feeder:
            raise ConfigError("mode=network requires --feeder")
        if command == "scale" and not self.feeder:
            raise ConfigError("scale requires --feeder")
        if command == "df" and not self.d:
            raise ConfigError("df requires --d")
        for name in ("k_sweep", "d", "mu"):
            val = getattr(self, name)
            if val is not None and len(val) == 0:
                raise ConfigError(f"{name} must not be empty")
        if self.k is not None and self.k < 0:
            raise ConfigError("k must be non-negative")
        if self.horizon not in ("strict", "clip"):
            raise ConfigError(f"horizon must be strict or clip, got {self.horizon!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def k_list(self) -> list[int]:
        if self.k_sweep is not None:
            return [int(k) for k in self.k_sweep]
        if self.k is not None:
            return [int(self.k)]
        raise ConfigError("give --k or --k-sweep")

    def plan_k(self) -> int:
        """The budget used for the detailed plan output."""
        return int(self.k) if self.k is not None else max(self.k_list())

    def mu_list(self) -> list:
        return [None] if self.mu is None else list(self.mu)

    def public_dict(self) -> dict:
        """Settings that influence results (the output location does not)."""
        d = asdict(self)
        d.pop("out")
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.public_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _mu_list(text) -> list:
    items = text if isinstance(text, list) else [v.strip() for v in str(text).split(",") if v.strip()]
    out = []
    for v in items:
        if v is None or (isinstance(v, str) and v.lower() in ("none", "inf", "unbounded")):
            out.append(None)
        else:
            mu = float(v)
            if not 0 <= mu <= 1:
                raise ConfigError(f"mu must lie in [0, 1], got {mu}")
            out.append(mu)
    return out


_CONVERTERS = {
    "k": int,
    "k_sweep": _int_list,
    "d": _int_list,
    "mu": _mu_list,
    "seed": int,
    "p0_max": float,
    "slot_minutes": int,
    "slots": int,
    "jobs": int,
    "n_trials": int,
    "cutoff_percentile": float,
    "margin": float,
    "bins": int,
    "headroom_fraction": float,
    "restrict_candidates": bool,
    "cap_at_capacity": bool,
    "minimal_delays": bool,
}


def resolve_config(file_values: dict, overrides: dict) -> RunConfig:
    """Merge defaults, config-file values and explicit flags (last wins)."""
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    for source in (file_values, overrides):
        for key, val in source.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = val
    try:
        for key, val in list(merged.items()):
            if val is not None and key in _CONVERTERS:
                merged[key] = _CONVERTERS[key](val)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad configuration value: {exc}") from None
    return RunConfig(**merged)


# --------------------------------------------------------------------------
# Output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format_number(v)
    return str(v)


def format_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Outputs:
    """Collects files for one run and writes them plus the manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.manifest = {}

    def table(self, name, header, rows, x=None, y=None, series=None, description=""):
        write_atomic(self.dir / name, format_table(header, rows))
        entry = {"columns": list(header), "description": description}
        if x:
            entry.update({"x": x, "y": y, "series": series})
        self.manifest[name] = entry

    def text(self, name, text, description=""):
        write_atomic(self.dir / name, text)
        self.manifest[name] = {"description": description}

    def json(self, name, obj, description=""):
        self.text(name, dumps(obj), description)

    def finish(self, command: str, cfg: RunConfig):
        files = dict(sorted(self.manifest.items()))
        write_atomic(
            self.dir / "manifest.json",
            dumps({"command": command, "version": __version__, "config_hash": cfg.hash(), "files": files}),
        )


# --------------------------------------------------------------------------
# Input assembly


def _read_grid(path: str, cfg: RunConfig) -> TimeGrid:
    try:
        with open(path) as fh:
            n_rows = sum(1 for line in fh if line.strip()) - 1
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    T = cfg.slots if cfg.slots is not None else n_rows
    if T < 1:
        raise MalformedCsv(f"{path} has no data rows")
    return TimeGrid(T, cfg.slot_minutes)


def _attach_bus(cfg: RunConfig):
    b = cfg.attach_bus
    if isinstance(b, str):
        try:
            return int(b)
        except ValueError:
            return b
    return b


def read_inputs(cfg: RunConfig):
    """Loads, new-load spec and (optional) feeder for a run."""
    if not cfg.loads:
        raise ConfigError("--loads is required")
    grid = _read_grid(cfg.loads, cfg)
    loads = load_csv(cfg.loads, grid)
    feeder = None
    if cfg.feeder:
        try:
            feeder = feeder_from_dict(json.loads(Path(cfg.feeder).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read {cfg.feeder}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{cfg.feeder} is not valid JSON: {exc}") from None
    bus = _attach_bus(cfg)
    if cfg.profile:
        spec = load_profile_csv(cfg.profile, grid, bus)
    else:
        spec = NewLoadSpec.flat(grid, bus)
    return loads, spec, feeder


def build_series(cfg: RunConfig, loads: LoadSet, spec: NewLoadSpec, feeder) -> CapacitySeries:
    if cfg.mode == "network":
        if spec.attach_bus is None:
            raise ConfigError("mode=network requires --attach-bus")
        if cfg.p0_max is not None:
            from dataclasses import replace

            feeder = replace(feeder, p0_max_kw=cfg.p0_max)
        try:
            feeder.bus_index(spec.attach_bus)
        except (KeyError, ValueError, InvalidFeeder):
            raise ConfigError(f"attach bus {spec.attach_bus!r} is not a load bus of the feeder") from None
        return capacity_network(loads, spec, feeder)
    p0 = cfg.p0_max if cfg.p0_max is not None else (feeder.p0_max_kw if feeder is not None else None)
    if p0 is None:
        raise ConfigError("copperplate mode needs --p0-max (or a feeder JSON providing p0_max_kw)")
    return capacity_copperplate(loads, spec, p0)


def binding_tally(series: CapacitySeries, K: int | None = None) -> dict:
    if series.binding is None:
        return {}
    slots = range(series.T) if K is None else series.order[:K]
    tally = {}
    for t in slots:
        key = series.binding[int(t)]
        tally[key] = tally.get(key, 0) + 1
    return dict(sorted(tally.items()))


def _base_report(command: str, cfg: RunConfig) -> dict:
    return {"command": command, "version": __version__, "config_hash": cfg.hash(), "config": cfg.public_dict()}


# --------------------------------------------------------------------------
# Commands


def cmd_capacity(cfg: RunConfig) -> int:
    loads, spec, feeder = read_inputs(cfg)
    series = build_series(cfg, loads, spec, feeder)
    out = Outputs(cfg.out)
    out.text("capacity.csv", format_capacity_csv(series), "per-slot residual and dynamic hosting capacity")
    report = _base_report("capacity", cfg)
    report.update({"T": series.T, "baseline_capacity_kw": float(series.sorted[0]),
                   "structurally_infeasible_slots": series.structurally_infeasible})
    if series.binding is not None:
        out.table("binding.csv", ["slot", "binding"], enumerate(series.binding),
                  description="tightest limit per slot")
        report["binding_tally"] = binding_tally(series)
    out.json("report.json", report, "run summary")
    out.finish("capacity", cfg)
    return EXIT_OK


def cmd_cf(cfg: RunConfig) -> int:
    loads, spec, feeder = read_inputs(cfg)
    series = build_series(cfg, loads, spec, feeder)
    K_list = cfg.k_list()
    rows = sweep_cf(series, K_list, cfg.mu_list(), jobs=cfg.jobs)
    C0 = solve_cf(series, 0).capacity
    plan = solve_cf(series, cfg.plan_k())
    counts, edges = depth_histogram(plan)

    out = Outputs(cfg.out)
    out.table("cf_sweep.csv", ["K", "mu", "capacity_kw", "gain_percent"],
              [(r.K, "none" if r.mu is None else r.mu, r.capacity, r.gain_percent) for r in rows],
              x="K", y="gain_percent", series="mu", description="capacity gain versus intervention budget")
    out.json("cf_plan.json", plan.to_json_dict(), "curtailment plan at the plan budget")
    out.table("cf_depth_hist.csv", ["depth_lo", "depth_hi", "count"], zip(edges[:-1], edges[1:], counts),
              x="depth_lo", y="count", description="curtailment depth distribution (fraction of capacity)")
    report = _base_report("cf", cfg)
    report.update({
        "baseline_capacity_kw": C0,
        "cells": [{"K": r.K, "mu": r.mu, "capacity_kw": r.capacity, "gain_percent": r.gain_percent} for r in rows],
        "plan_K": plan.K,
        "depth_histogram": {"edges": edges, "counts": counts},
        "binding_tally": binding_tally(series, plan.K),
    })
    out.json("report.json", report, "run summary")
    out.finish("cf", cfg)
    return EXIT_OK


def _df_cell(series, K, D, cfg):
    return solve_df(series, K, D, cfg.restrict_candidates, cfg.cap_at_capacity, horizon=cfg.horizon)


def cmd_df(cfg: RunConfig) -> int:
    loads, spec, feeder = read_inputs(cfg)
    series = build_series(cfg, loads, spec, feeder)
    K_list = cfg.k_list()
    D_list = [int(d) for d in cfg.d]
    C0 = solve_cf(series, 0).capacity
    cells = [(K, D) for D in D_list for K in K_list]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            plans = list(pool.map(lambda c: _df_cell(series, c[0], c[1], cfg), cells))
    else:
        plans = [_df_cell(series, K, D, cfg) for K, D in cells]
    cf_cap = {K: solve_cf(series, K).capacity for K in sorted(set(K_list))}
    thm3 = {K: check_thm3(series, K).ok for K in sorted(set(K_list))}

    plan_k = cfg.plan_k()
    D_plan = max(D_list)
    plan = _df_cell(series, plan_k, D_plan, cfg)
    if cfg.minimal_delays and plan.K:
        plan = minimal_delays(plan, series, cfg.cap_at_capacity)
        counts, values = delay_histogram(plan)
    else:
        counts, values = np.zeros(0, dtype=int), np.zeros(0, dtype=int)

    out = Outputs(cfg.out)
    sweep_rows = []
    for (K, D), p in zip(cells, plans):
        sweep_rows.append((K, D, p.capacity, gain_percent(p.capacity, C0), cf_cap[K],
                           gain_percent(cf_cap[K], C0), p.a4.ok if p.a4 else None, thm3[K], p.lower_bound_only))
    out.table("df_sweep.csv",
              ["K", "D", "capacity_kw", "gain_percent", "cf_capacity_kw", "cf_gain_percent", "a4_ok", "thm3_ok",
               "lower_bound_only"],
              sweep_rows, x="K", y="gain_percent", series="D", description="delay-flexibility gain versus budget")
    out.json("df_plan.json", plan.to_json_dict(), "delay plan at the plan budget and largest D")
    out.table("df_delay_hist.csv", ["delay_slots", "count"], zip(values, counts), x="delay_slots", y="count",
              description="minimal delay requirement per event")
    a4_fail = [{"K": K, "D": D, "windows": p.a4.windows, "slack": p.a4.slack}
               for (K, D), p in zip(cells, plans) if p.a4 is not None and not p.a4.ok]
    report = _base_report("df", cfg)
    report.update({
        "baseline_capacity_kw": C0,
        "cells": [{"K": K, "D": D, "capacity_kw": p.capacity, "gain_percent": gain_percent(p.capacity, C0),
                   "a4_ok": p.a4.ok if p.a4 else None, "lower_bound_only": p.lower_bound_only}
                  for (K, D), p in zip(cells, plans)],
        "cf_capacity_kw": {str(K): c for K, c in cf_cap.items()},
        "thm3_ok": {str(K): v for K, v in thm3.items()},
        "plan_K": plan.K,
        "plan_D": D_plan,
        "delay_histogram": {"delay_slots": values, "counts": counts},
        "binding_tally": binding_tally(series, plan.K),
        "assumption_violations": {"a4": a4_fail},
    })
    out.json("report.json", report, "run summary")
    out.finish("df", cfg)
    if a4_fail:
        print(f"warning: window-slack assumption fails in {len(a4_fail)} cell(s); "
              "those capacities are lower bounds", file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _tail_inputs(cfg: RunConfig):
    """Tail model plus the high-load sample it came from (if fitted here)."""
    aggregate = None
    if cfg.loads:
        loads = load_csv(cfg.loads, _read_grid(cfg.loads, cfg))
        aggregate = loads.aggregate
    if cfg.tail_model:
        try:
            model = TailModel.from_dict(json.loads(Path(cfg.tail_model).read_text()))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tail model {cfg.tail_model}: {exc}") from None
        return model, aggregate, None
    if aggregate is None:
        raise ConfigError("give --loads (to fit) or --tail-model")
    fit = fit_tail(aggregate, cfg.cutoff_percentile, cfg.fit_method, cfg.margin, cfg.bins)
    return fit.model, aggregate, fit


def _p0(cfg: RunConfig) -> float:
    if cfg.p0_max is None:
        raise ConfigError("theory commands need --p0-max")
    return cfg.p0_max


def cmd_theory_fit(cfg: RunConfig) -> int:
    if not cfg.loads:
        raise ConfigError("theory fit needs --loads")
    cfg = RunConfig(**{**asdict(cfg), "tail_model": None})
    model, aggregate, fit = _tail_inputs(cfg)
    centers, emp, dens = binned_density(aggregate, model, cfg.bins)
    out = Outputs(cfg.out)
    out.json("tail_fit.json", {**model.to_dict(), "method": fit.method, "log_likelihood": fit.log_likelihood,
                               "n_used": fit.n_used, **fit.extra}, "fitted tail model")
    out.table("tail_density.csv", ["x_kw", "empirical_density", "model_density"], zip(centers, emp, dens),
              x="x_kw", y="empirical_density", description="binned high-load density against the model")
    report = _base_report("theory fit", cfg)
    report["tail_model"] = model.to_dict()
    out.json("report.json", report, "run summary")
    out.finish("theory fit", cfg)
    return EXIT_OK


def cmd_theory_expected(cfg: RunConfig) -> int:
    model, aggregate, _ = _tail_inputs(cfg)
    p0 = _p0(cfg)
    k_max = model.T_L - 2
    K_list = cfg.k_list() if (cfg.k_sweep is not None or cfg.k is not None) else list(range(0, min(350, k_max) + 1, 10))
    if max(K_list) > k_max:
        raise ConfigError(f"K must not exceed T_L - 2 = {k_max}")
    sample = None
    if aggregate is not None:
        sample = aggregate[aggregate >= model.L]
    E_emp = expected_capacity(model, K_list, p0, "empirical", sample)
    E_wb = expected_capacity(model, K_list, p0, "weibull")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mc = monte_carlo_validate(model, p0, K_list, c_list=[], n_trials=cfg.n_trials, seed=cfg.seed)
    rows = []
    for j, K in enumerate(K_list):
        mean, stderr, _, _ = mc.means[K]
        rows.append((K, E_emp[j], E_wb[j], mean, 1.96 * stderr))
    gains = marginal_gains(model, max(K_list), p0)
    out = Outputs(cfg.out)
    out.table("theory_curves.csv", ["K", "E_empirical", "E_weibull", "mc_mean", "mc_ci"], rows,
              x="K", y="E_weibull", description="expected capacity versus budget (mc_ci: 95% half-width)")
    report = _base_report("theory expected", cfg)
    report.update({"tail_model": model.to_dict(), "p0_max_kw": p0, "marginal_gains_kw": gains})
    if max(K_list) >= 3:
        dr = depth_requirements(model, max(K_list), p0)
        report["depth_requirements"] = {"K": max(K_list), "r_kw": dr.r, "quantile_check_ok": dr.ok,
                                        "median_below_midpoint": dr.median_below_midpoint}
    out.json("report.json", report, "run summary")
    out.finish("theory expected", cfg)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    model, _, _ = _tail_inputs(cfg)
    p0 = _p0(cfg)
    K_list = cfg.k_list() if (cfg.k_sweep is not None or cfg.k is not None) else [0, 10, 100, 350]
    K_list = [k for k in K_list if k <= model.T_L - 1]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mc = monte_carlo_validate(model, p0, K_list, None, cfg.n_trials, cfg.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    body = mc.to_dict()
    body["tail_model"] = model.to_dict()
    body["p0_max_kw"] = p0
    body["seed"] = cfg.seed
    out = Outputs(cfg.out)
    out.json("validate.json", body, "Monte Carlo check of the capacity distribution")
    report = _base_report("validate", cfg)
    report["ok"] = mc.ok
    report["warnings"] = [str(w.message) for w in caught]
    out.json("report.json", report, "run summary")
    out.finish("validate", cfg)
    return EXIT_OK if mc.ok else EXIT_FAILED


def cmd_scale(cfg: RunConfig) -> int:
    loads, _, feeder = read_inputs(cfg)
    if feeder is None:
        raise ConfigError("scale requires --feeder")
    scaled, new_feeder = scale_case_study(loads, feeder, cfg.headroom_fraction)
    gamma = new_feeder.metadata["scaling_gamma"]
    zm = build_impedance(new_feeder)
    v_min = float(node_voltages(new_feeder.load_matrix(loads.scaled(gamma)), zm, new_feeder).min())
    out = Outputs(cfg.out)
    out.text("scaled_loads.csv", format_load_csv(scaled), "loads after both scaling steps")
    out.json("scaled_feeder.json", new_feeder.to_json_dict(), "feeder with the new transformer limit")
    report = _base_report("scale", cfg)
    report.update({"scaling_gamma": gamma, "p0_max_kw": new_feeder.p0_max_kw,
                   "min_voltage_after_step_a": v_min, "target_voltage": float(feeder.v_lower.min()),
                   "p0_max_rule": new_feeder.metadata["p0_max_rule"]})
    out.json("report.json", report, "run summary")
    out.finish("scale", cfg)
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=None, help="JSON file with defaults for any flag")
    p.add_argument("--loads", default=S, help="existing-load CSV (slot,bus_<id>,...)")
    p.add_argument("--feeder", default=S, help="feeder JSON")
    p.add_argument("--profile", default=S, help="new-load profile CSV (slot,lhat); flat if omitted")
    p.add_argument("--attach-bus", default=S)
    p.add_argument("--mode", choices=("copperplate", "network"), default=S)
    p.add_argument("--k", type=int, default=S, help="intervention budget for the detailed plan")
    p.add_argument("--k-sweep", default=S, help="comma-separated budgets")
    p.add_argument("--d", default=S, help="delay window length(s) in slots, comma-separated")
    p.add_argument("--mu", default=S, help="depth bounds, comma-separated; 'none' = unbounded")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--restrict-candidates", action="store_true", default=S)
    p.add_argument("--horizon", choices=("strict", "clip"), default=S,
                   help="strict: delay windows must end inside the horizon; clip: truncate them")
    p.add_argument("--cap-at-capacity", action="store_true", default=S)
    p.add_argument("--p0-max", type=float, default=S, help="transformer limit in kW")
    p.add_argument("--slot-minutes", type=int, default=S)
    p.add_argument("--slots", type=int, default=S, help="expected number of slots T")
    p.add_argument("--jobs", type=int, default=S, help="worker threads for sweeps")
    p.add_argument("--n-trials", type=int, default=S)
    p.add_argument("--cutoff-percentile", type=float, default=S)
    p.add_argument("--fit-method", choices=("mle", "hist"), default=S)
    p.add_argument("--margin", type=float, default=S)
    p.add_argument("--bins", type=int, default=S)
    p.add_argument("--headroom-fraction", type=float, default=S)
    p.add_argument("--tail-model", default=S, help="tail model JSON (as written by 'theory fit')")
    p.add_argument("--no-minimal-delays", dest="minimal_delays", action="store_false", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexhca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("capacity", "per-slot capacities"),
        ("cf", "curtailment flexibility sweep"),
        ("df", "delay flexibility sweep"),
        ("validate", "Monte Carlo check of the tail theory"),
        ("scale", "two-step case-study load scaling"),
    ]:
        _add_common(sub.add_parser(name, help=help_))
    theory = sub.add_parser("theory", help="tail fit and expected-capacity curves")
    tsub = theory.add_subparsers(dest="action", required=True)
    _add_common(tsub.add_parser("fit", help="fit the tail model"))
    _add_common(tsub.add_parser("expected", help="expected capacity curves"))
    return parser


COMMANDS = {
    "capacity": cmd_capacity,
    "cf": cmd_cf,
    "df": cmd_df,
    "validate": cmd_validate,
    "scale": cmd_scale,
    ("theory", "fit"): cmd_theory_fit,
    ("theory", "expected"): cmd_theory_expected,
}


def _error_report(cfg: RunConfig | None, command: str, exc: Exception, code: int) -> None:
    if cfg is None:
        return
    body = _base_report(command, cfg)
    body["error"] = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "slots", None):
        body["error"]["slots"] = exc.slots
    try:
        write_atomic(Path(cfg.out) / "report.json", dumps(body))
    except OSError:
        pass


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    action = args.pop("action", None)
    key = command if action is None else (command, action)
    label = command if action is None else f"{command} {action}"
    config_path = args.pop("config", None)
    cfg = None
    try:
        file_values = {}
        if config_path:
            try:
                file_values = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from None
            if not isinstance(file_values, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = resolve_config(file_values, args)
        cfg.validate(label)
        return COMMANDS[key](cfg)
    except (ConfigError, MalformedCsv, InvalidFeeder, ValueError) as e:
        exc, code = e, EXIT_CONFIG
    except (Infeasible, EventNearHorizonEnd) as e:
        exc, code = e, EXIT_INFEASIBLE
    except AssumptionViolated as e:
        exc, code = e, EXIT_ASSUMPTION
    except FlexHcaError as e:
        exc, code = e, EXIT_FAILED
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    _error_report(cfg, label, exc, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
