"""Time grid, loads, new-load profile and feeder description.

All powers are kW and all voltages / impedances are per unit. Conversions
happen only at the I/O boundary (``base_kw`` on :class:`FeederModel`).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import InfeasibleScaling, InvalidFeeder, MalformedCsv, NegativeLoad

SLOTS_PER_YEAR_15MIN = 35040


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def format_number(value: float) -> str:
    """Shortest round-tripping text for a float, integers without ``.0``."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    if text == "-0":
        text = "0"
    return text


def _parse_bus_id(text: str):
    try:
        return int(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``T`` slots, ``slot_minutes`` long each."""

    T: int
    slot_minutes: int = 15
    start_label: str | None = None

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T!r}")
        if int(self.slot_minutes) != self.slot_minutes or self.slot_minutes < 1:
            raise ValueError(f"slot_minutes must be a positive integer, got {self.slot_minutes!r}")

    @classmethod
    def full_year(cls, slot_minutes: int = 15, start_label: str | None = None) -> "TimeGrid":
        return cls(365 * 24 * 60 // slot_minutes, slot_minutes, start_label)

    @property
    def slots_per_day(self) -> int:
        return 24 * 60 // self.slot_minutes


@dataclass(frozen=True)
class LoadSet:
    """Existing real-power load, one row per bus, one column per slot."""

    grid: TimeGrid
    values: np.ndarray
    bus_ids: tuple

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != self.grid.T:
            raise ValueError(f"load matrix has {values.shape[1]} columns, grid has T={self.grid.T}")
        if values.shape[0] != len(self.bus_ids):
            raise ValueError("one bus id per load row is required")
        if not np.all(np.isfinite(values)):
            raise ValueError("load values must be finite")
        if np.any(values < 0):
            raise NegativeLoad("load values must be non-negative")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "bus_ids", tuple(self.bus_ids))

    @property
    def aggregate(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def scaled(self, factor: float) -> "LoadSet":
        return replace(self, values=self.values * factor)


@dataclass(frozen=True)
class NewLoadSpec:
    """Normalized profile of the new load and the bus it attaches to."""

    profile: np.ndarray
    attach_bus: Any = None

    def __post_init__(self):
        profile = np.asarray(self.profile, dtype=float).ravel()
        if not np.all(np.isfinite(profile)) or np.any(profile < 0) or np.any(profile > 1):
            raise ValueError("new-load profile must lie in [0, 1]")
        object.__setattr__(self, "profile", _frozen(profile))

    @classmethod
    def flat(cls, grid: TimeGrid, attach_bus=None) -> "NewLoadSpec":
        return cls(np.ones(grid.T), attach_bus)


@dataclass(frozen=True)
class Line:
    from_bus: Any
    to_bus: Any
    r: float
    x: float


@dataclass(frozen=True)
class FeederModel:
    """Single-phase radial feeder rooted at bus ``0``.

    ``eta``, ``v_lower`` and ``v_upper`` are indexed like :attr:`load_buses`
    (all buses except the root, in the order given). ``eta`` may also be an
    ``(n, T)`` matrix for time-varying reactive ratios. ``base_kw`` converts
    per-unit impedances into per-unit voltage per kW of injection.
    """

    buses: tuple
    lines: tuple
    eta: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray
    p0_max_kw: float
    v0: float = 1.0
    base_kw: float = 1.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        buses = tuple(self.buses)
        if 0 not in buses:
            raise InvalidFeeder("the root bus must have id 0")
        if len(set(buses)) != len(buses):
            raise InvalidFeeder("bus ids must be unique")
        object.__setattr__(self, "buses", buses)
        lines = tuple(ln if isinstance(ln, Line) else Line(*ln) for ln in self.lines)
        for ln in lines:
            if ln.r < 0 or ln.x < 0:
                raise InvalidFeeder(f"line {ln.from_bus}-{ln.to_bus} has negative impedance")
        object.__setattr__(self, "lines", lines)
        n = len(buses) - 1
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 0:
            eta = np.full(n, float(eta))
        if eta.shape[0] != n or eta.ndim > 2:
            raise InvalidFeeder(f"eta must have one entry per non-root bus ({n})")
        object.__setattr__(self, "eta", _frozen(eta))
        for name in ("v_lower", "v_upper"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(n, float(v))
            if v.shape != (n,):
                raise InvalidFeeder(f"{name} must have one entry per non-root bus ({n})")
            object.__setattr__(self, name, _frozen(v))
        if not self.p0_max_kw > 0:
            raise InvalidFeeder("p0_max_kw must be positive")
        if not self.base_kw > 0:
            raise InvalidFeeder("base_kw must be positive")
        if np.any(self.v_lower >= self.v0):
            raise InvalidFeeder("v_lower must be below v0 at every bus")
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def load_buses(self) -> tuple:
        return tuple(b for b in self.buses if b != 0)

    @property
    def n(self) -> int:
        return len(self.buses) - 1

    def bus_index(self, bus) -> int:
        """Row index of ``bus`` in the per-bus arrays (root excluded)."""
        try:
            return self.load_buses.index(bus)
        except ValueError:
            raise InvalidFeeder(f"bus {bus!r} is not a non-root bus of this feeder") from None

    def load_matrix(self, loads: LoadSet) -> np.ndarray:
        """Existing loads arranged as an ``(n, T)`` matrix in feeder bus order."""
        out = np.zeros((self.n, loads.grid.T))
        for row, bus in zip(loads.values, loads.bus_ids):
            out[self.bus_index(bus)] += row
        return out

    def to_json_dict(self) -> dict:
        eta = self.eta.tolist()
        return {
            "buses": list(self.buses),
            "lines": [{"from": ln.from_bus, "to": ln.to_bus, "r": ln.r, "x": ln.x} for ln in self.lines],
            "eta": eta,
            "v0": self.v0,
            "v_lower": self.v_lower.tolist(),
            "v_upper": self.v_upper.tolist(),
            "p0_max_kw": self.p0_max_kw,
            "base_kw": self.base_kw,
            "metadata": self.metadata,
        }


# --------------------------------------------------------------------------
# I/O


def load_csv(path, grid: TimeGrid) -> LoadSet:
    """Read a ``slot,bus_<id>,...`` CSV with exactly ``grid.T`` data rows."""
    text = Path(path).read_text()
    return parse_load_csv(text, grid)


def parse_load_csv(text: str, grid: TimeGrid) -> LoadSet:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise MalformedCsv("empty load CSV")
    header, body = rows[0], rows[1:]
    if header[0].strip() != "slot" or len(header) < 2:
        raise MalformedCsv("header must start with 'slot' followed by bus_<id> columns")
    bus_ids = []
    for name in header[1:]:
        name = name.strip()
        if not name.startswith("bus_") or len(name) == 4:
            raise MalformedCsv(f"bad column name {name!r}")
        bus_ids.append(_parse_bus_id(name[4:]))
    if len(body) != grid.T:
        raise MalformedCsv(f"expected {grid.T} data rows, found {len(body)}")
    values = np.empty((len(bus_ids), grid.T))
    for t, row in enumerate(body):
        if len(row) != len(header):
            raise MalformedCsv(f"row {t} has {len(row)} cells, expected {len(header)}")
        try:
            slot = int(row[0])
        except ValueError:
            raise MalformedCsv(f"row {t}: slot {row[0]!r} is not an integer") from None
        if slot != t:
            raise MalformedCsv(f"row {t}: slots must be consecutive from 0, found {slot}")
        for j, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise MalformedCsv(f"row {t}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise MalformedCsv(f"row {t}: non-finite cell {cell!r}")
            if v < 0:
                raise NegativeLoad(f"row {t}, bus {bus_ids[j]}: negative load {cell}")
            values[j, t] = v
    return LoadSet(grid, values, tuple(bus_ids))


def format_load_csv(loads: LoadSet) -> str:
    lines = ["slot," + ",".join(f"bus_{b}" for b in loads.bus_ids)]
    cols = loads.values.T
    for t in range(loads.grid.T):
        lines.append(str(t) + "," + ",".join(format_number(v) for v in cols[t]))
    return "\n".join(lines) + "\n"


def write_csv(loads: LoadSet, path) -> None:
    Path(path).write_text(format_load_csv(loads))


def load_profile_csv(path, grid: TimeGrid, attach_bus=None) -> NewLoadSpec:
    """Read a new-load profile from a CSV with an ``lhat`` column."""
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
    if rows and "lhat" not in rows[0]:
        raise MalformedCsv("profile CSV needs an 'lhat' column")
    if len(rows) != grid.T:
        raise MalformedCsv(f"expected {grid.T} profile rows, found {len(rows)}")
    try:
        lhat = np.array([float(r["lhat"]) for r in rows])
    except ValueError as exc:
        raise MalformedCsv(str(exc)) from None
    if np.any(~np.isfinite(lhat)) or np.any(lhat < 0) or np.any(lhat > 1):
        raise MalformedCsv("lhat values must lie in [0, 1]")
    return NewLoadSpec(lhat, attach_bus)


def write_profile_csv(spec: NewLoadSpec, path) -> None:
    body = "".join(f"{t},{format_number(v)}\n" for t, v in enumerate(spec.profile))
    Path(path).write_text("slot,lhat\n" + body)


def feeder_from_dict(d: dict) -> FeederModel:
    try:
        lines = tuple(Line(ln["from"], ln["to"], float(ln["r"]), float(ln["x"])) for ln in d["lines"])
        return FeederModel(
            buses=tuple(d["buses"]),
            lines=lines,
            eta=d.get("eta", 0.0),
            v_lower=d.get("v_lower", 0.95),
            v_upper=d.get("v_upper", 1.05),
            p0_max_kw=float(d["p0_max_kw"]),
            v0=float(d.get("v0", 1.0)),
            base_kw=float(d.get("base_kw", 1.0)),
            metadata=d.get("metadata", {}),
        )
    except KeyError as exc:
        raise InvalidFeeder(f"feeder JSON is missing key {exc}") from None


def load_feeder_json(path) -> FeederModel:
    return feeder_from_dict(json.loads(Path(path).read_text()))


def write_feeder_json(feeder: FeederModel, path) -> None:
    Path(path).write_text(json.dumps(feeder.to_json_dict(), indent=1, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Synthetic fixtures


def synth_loads(
    n_buses: int,
    grid: TimeGrid,
    seed: int,
    peak_kw: float,
    tail_alpha: float,
    cutoff_ratio: float = 0.56,
    floor_ratio: float = 0.12,
    tail_fraction: float = 0.10,
) -> LoadSet:
    """Deterministic residential-like load with a prescribed right tail.

    Algorithm (all randomness from ``numpy.random.default_rng(seed)``):

    1. Each bus gets a base shape ``1 + a_d cos(2pi (h - h_i)/24) +
       a_w weekend(t) + a_s cos(2pi (day - 200)/365) + 0.15 N(0, 1)``,
       clipped at 0.05, with the evening peak hour ``h_i`` in [17, 20].
    2. The bus shapes are summed and ranked. The top ``tail_fraction`` of
       slots receive, in rank order, a sorted i.i.d. sample from the density
       proportional to ``(1 - x)^tail_alpha`` on ``[cutoff_ratio, 1]``. The
       remaining slots are mapped affinely (rank preserving) onto
       ``[floor_ratio, cutoff_ratio]``.
    3. The aggregate is rescaled so its maximum is exactly ``peak_kw`` and
       split between buses in proportion to their base shapes.
    """
    if n_buses < 1:
        raise ValueError("n_buses must be >= 1")
    if tail_alpha <= 0:
        raise ValueError("tail_alpha must be positive")
    rng = np.random.default_rng(seed)
    T = grid.T
    hours = np.arange(T) * grid.slot_minutes / 60.0
    hour_of_day = hours % 24.0
    day = hours // 24.0
    weekend = ((day % 7) >= 5).astype(float)

    peak_hour = rng.uniform(17.0, 20.0, size=(n_buses, 1))
    a_d = rng.uniform(0.35, 0.6, size=(n_buses, 1))
    a_w = rng.uniform(0.0, 0.15, size=(n_buses, 1))
    a_s = rng.uniform(0.1, 0.3, size=(n_buses, 1))
    base = (
        1.0
        + a_d * np.cos(2 * np.pi * (hour_of_day - peak_hour) / 24.0)
        + a_w * weekend
        + a_s * np.cos(2 * np.pi * (day - 200.0) / 365.0)
        + 0.15 * rng.standard_normal((n_buses, T))
    )
    base = np.clip(base, 0.05, None)
    agg = base.sum(axis=0)

    order = np.argsort(agg, kind="stable")
    m = max(1, int(math.ceil(tail_fraction * T)))
    shaped = np.empty(T)
    u = np.sort(rng.uniform(size=m))
    shaped[order[T - m:]] = 1.0 - (1.0 - cutoff_ratio) * (1.0 - u) ** (1.0 / (tail_alpha + 1.0))
    low = order[: T - m]
    if low.size:
        lo_vals = agg[low]
        span = lo_vals[-1] - lo_vals[0]
        frac = (lo_vals - lo_vals[0]) / span if span > 0 else np.zeros_like(lo_vals)
        shaped[low] = floor_ratio + (cutoff_ratio - floor_ratio) * frac
    shaped *= peak_kw / shaped.max()
    values = base / agg * shaped
    return LoadSet(grid, values, tuple(range(1, n_buses + 1)))


def synth_ev_profile(
    grid: TimeGrid,
    seed: int,
    attach_bus=None,
    peak_hour: float = 1.0,
    width_h: float = 2.0,
    amp_range=(0.4, 1.0),
    floor: float = 0.10,
    noise: float = 0.03,
) -> NewLoadSpec:
    """Apartment EV-charging-like normalized profile.

    Overnight charging modelled as a Gaussian bump in hour-of-day (centre
    ``peak_hour``, standard deviation ``width_h``, wrapping at midnight) on
    top of a ``floor``. Each day's bump is scaled by ``U(*amp_range)`` and
    i.i.d. ``N(0, noise)`` is added before clipping at 0 and normalizing the
    maximum to 1.
    """
    rng = np.random.default_rng(seed)
    T = grid.T
    hours = np.arange(T) * grid.slot_minutes / 60.0
    hod = hours % 24.0
    day = (hours // 24.0).astype(int)
    dist = np.minimum(np.abs(hod - peak_hour), 24.0 - np.abs(hod - peak_hour))
    shape = np.exp(-0.5 * (dist / width_h) ** 2)
    daily = rng.uniform(amp_range[0], amp_range[1], size=day.max() + 1)[day]
    prof = floor + (1.0 - floor) * shape * daily + noise * rng.standard_normal(T)
    prof = np.clip(prof, 0.0, None)
    prof /= prof.max()
    return NewLoadSpec(np.clip(prof, 0.0, 1.0), attach_bus)


def synth_feeder(
    n_buses: int,
    seed: int,
    p0_max_kw: float = 1.0,
    base_kw: float = 1000.0,
    eta: float | None = None,
    v_lower: float = 0.95,
    v_upper: float = 1.05,
) -> FeederModel:
    """Random radial feeder with a single trunk line leaving the substation.

    Buses ``1..n_buses``; bus 1 hangs off the root, every later bus attaches
    to a uniformly chosen earlier non-root bus (with a bias towards the most
    recent one so long laterals appear). Line impedances are drawn in p.u.
    on ``base_kw``.
    """
    rng = np.random.default_rng(seed)
    lines = [Line(0, 1, float(rng.uniform(0.002, 0.004)), float(rng.uniform(0.003, 0.006)))]
    for b in range(2, n_buses + 1):
        parent = b - 1 if rng.uniform() < 0.6 else int(rng.integers(1, b))
        lines.append(Line(parent, b, float(rng.uniform(0.0005, 0.003)), float(rng.uniform(0.0005, 0.003))))
    etas = rng.uniform(0.2, 0.5, size=n_buses) if eta is None else np.full(n_buses, eta)
    return FeederModel(
        buses=tuple(range(n_buses + 1)),
        lines=tuple(lines),
        eta=etas,
        v_lower=np.full(n_buses, v_lower),
        v_upper=np.full(n_buses, v_upper),
        p0_max_kw=p0_max_kw,
        v0=1.0,
        base_kw=base_kw,
    )


# --------------------------------------------------------------------------
# Case-study scaling


def scale_case_study(
    loads: LoadSet,
    feeder: FeederModel,
    headroom_fraction: float = 0.10,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> tuple[LoadSet, FeederModel]:
    """Two-step uniform scaling used to build a feasible network case.

    (a) Bisect for the factor that puts the lowest voltage over all buses
    and slots exactly at ``min(v_lower)`` and set the transformer limit to
    the peak of the scaled total load. (b) Scale all loads by
    ``1 - headroom_fraction``.
    """
    from .network import build_impedance, node_voltages

    if not 0 <= headroom_fraction < 1:
        raise ValueError("headroom_fraction must lie in [0, 1)")
    zmats = build_impedance(feeder)
    target = float(feeder.v_lower.min())
    if feeder.v0 <= target:
        raise InfeasibleScaling("substation voltage is already at or below the lower bound")
    lmat = feeder.load_matrix(loads)

    def min_voltage(gamma: float) -> float:
        return float(node_voltages(lmat * gamma, zmats, feeder).min())

    lo, hi = 0.0, 1.0
    while min_voltage(hi) > target:
        hi *= 2.0
        if hi > 1e15:
            raise InfeasibleScaling("loads do not depress any voltage; no scaling reaches the bound")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if min_voltage(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    # pick the end closer to the target voltage
    gamma = lo if abs(min_voltage(lo) - target) <= abs(min_voltage(hi) - target) else hi

    scaled = loads.scaled(gamma)
    p0 = float(scaled.aggregate.max())
    meta = dict(feeder.metadata)
    meta.update(
        {
            "scaling_gamma": gamma,
            "headroom_fraction": headroom_fraction,
            "p0_max_rule": "peak of scaled total load",
        }
    )
    new_feeder = replace(feeder, p0_max_kw=p0, metadata=meta)
    return scaled.scaled(1.0 - headroom_fraction), new_feeder
