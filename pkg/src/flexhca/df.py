"""Hosting capacity under delay flexibility.

Events are placed at the ``K`` slots with the lowest dynamic hosting
capacity. For a fixed capacity ``C`` each event must push its deficit
``C*lhat(t_k) - c_res(t_k)`` into the following ``D`` slots. Feasibility of
that routing is decided by an earliest-deadline-first sweep over time
(:func:`route_deficits`); the capacity itself by bisection. A dense LP over
the same constraint set (:func:`solve_df_lp`) serves as oracle.

A slot that is itself an event may take shifted load from an earlier event
and pass it on by shifting more of its own load; the sweep models this
relaying explicitly so that it agrees with the LP.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .capacity import CapacitySeries
from .errors import EventNearHorizonEnd, Infeasible, LpNumericalFailure
from .lp import LpInfeasible, simplex_max

CONSTRAINT_TOL = 1e-7
LP_FALLBACK_MAX_SLOTS = 3000


@dataclass(frozen=True)
class A4Report:
    windows: tuple  # (start, end) inclusive, 0-indexed
    slack: tuple
    satisfied: tuple

    @property
    def ok(self) -> bool:
        return all(self.satisfied)


@dataclass(frozen=True)
class DfPlan:
    """Solved delay-flexibility plan.

    ``U`` has shape ``(D+1, K)``: row 0 holds the (non-positive) reduction at
    each event, row ``tau`` the load added ``tau`` slots later. ``events`` are
    sorted by time.
    """

    capacity: float
    events: tuple
    D: int
    U: np.ndarray
    u: np.ndarray
    merged_windows: tuple
    a4: A4Report | None = None
    lower_bound_only: bool = False
    thm3_ok: bool | None = None
    minimal_delays: tuple | None = None
    method: str = "greedy"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return len(self.events)

    def to_json_dict(self) -> dict:
        events = []
        for k, t in enumerate(self.events):
            col = self.U[:, k]
            events.append(
                {
                    "t": int(t),
                    "reduce_kw": float(-col[0]),
                    "shifts": [{"offset": int(tau), "add_kw": float(col[tau])} for tau in range(1, self.D + 1) if col[tau] > 0],
                    "d_min": None if self.minimal_delays is None else int(self.minimal_delays[k]),
                }
            )
        return {
            "capacity_kw": self.capacity,
            "events": events,
            "a4_ok": None if self.a4 is None else self.a4.ok,
            "thm3_ok": self.thm3_ok,
            "lower_bound_only": self.lower_bound_only,
            "method": self.method,
        }


# --------------------------------------------------------------------------
# Event selection and assumption checks


def merge_windows(events, D, T: int | None = None) -> list[tuple[int, int]]:
    """Union of overlapping ``[t, t + D]`` windows, sorted by start.

    With ``T`` given, windows are truncated at the last slot ``T - 1``.
    """
    if np.isscalar(D):
        D = [int(D)] * len(events)
    end = (lambda x: x) if T is None else (lambda x: min(x, T - 1))
    spans = sorted((int(t), end(int(t) + int(d))) for t, d in zip(events, D))
    merged = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def select_events(series: CapacitySeries, K: int, D: int, restrict_candidates: bool = False, horizon: str = "strict"):
    """The ``K`` lowest-ranked slots (sorted by time) and their merged windows.

    With ``horizon="strict"`` windows must fit in the horizon: an event at
    0-indexed slot ``t`` needs ``t + D <= T - 1``. A violating event raises
    :class:`EventNearHorizonEnd`, or with ``restrict_candidates`` such slots
    are skipped when picking events. With ``horizon="clip"`` any slot may be
    an event and its window is cut at the last slot.
    """
    if K < 0 or D < 0:
        raise ValueError("K and D must be non-negative")
    if horizon not in ("strict", "clip"):
        raise ValueError(f"unknown horizon mode {horizon!r}")
    last = series.T - 1 - D
    if horizon == "clip":
        if K > series.T:
            raise ValueError("K exceeds the number of slots")
        events = tuple(sorted(int(t) for t in series.order[:K]))
        return events, tuple(merge_windows(events, D, series.T))
    if restrict_candidates:
        cand = series.order[series.order <= last]
        if cand.size < K:
            raise ValueError(f"only {cand.size} candidate slots leave room for a {D}-slot delay")
        events = cand[:K]
    else:
        if K > series.T:
            raise ValueError("K exceeds the number of slots")
        events = series.order[:K]
        late = events[events > last]
        if late.size:
            raise EventNearHorizonEnd(
                f"events at slots {sorted(late.tolist())[:10]} leave fewer than D={D} slots before the horizon end"
            )
    events = tuple(sorted(int(t) for t in events))
    return events, tuple(merge_windows(events, D))


def _slack(series: CapacitySeries, C: float) -> np.ndarray:
    """``c_res - C * lhat`` with slots where the new load is off left at ``c_res``."""
    with np.errstate(invalid="ignore"):
        return np.where(series.lhat > 0, series.c_res - C * series.lhat, series.c_res)


def check_a4(series: CapacitySeries, events, merged_windows, K: int) -> A4Report:
    """Capacity slack of each merged window evaluated at ``C[K]``."""
    if K < 1:
        return A4Report((), (), ())
    cK = float(series.sorted[K - 1])
    slack, ok = [], []
    for a, b in merged_windows:
        s = float(np.sum(_slack(series, cK)[a:b + 1]))
        slack.append(s)
        ok.append(s >= 0)
    return A4Report(tuple(merged_windows), tuple(slack), tuple(ok))


@dataclass(frozen=True)
class Thm3Report:
    capacity_cf: float
    events: tuple
    sums: tuple
    flags: tuple

    @property
    def ok(self) -> bool:
        return all(self.flags)


def check_thm3(series: CapacitySeries, K: int, tol: float = 1e-9) -> Thm3Report:
    """Does some delay length let DF reach the CF capacity ``C[K+1]``?

    Evaluates, for every event, the total slack from the event to the end of
    the horizon at the CF capacity.
    """
    if K < 0 or K > series.T - 1:
        raise ValueError("K out of range")
    C = float(series.sorted[K])
    terms = _slack(series, C)
    suffix = np.cumsum(terms[::-1])[::-1]
    events = tuple(sorted(int(t) for t in series.order[:K]))
    sums = tuple(float(suffix[t]) for t in events)
    thr = -tol * max(1.0, abs(C))
    return Thm3Report(C, events, sums, tuple(s >= thr for s in sums))


# --------------------------------------------------------------------------
# Feasibility kernel


@dataclass
class Routing:
    feasible: bool
    reduction: dict  # event slot -> total kW shifted out
    arrivals: list  # (origin event slot, destination slot, kW)


def route_deficits(
    series: CapacitySeries,
    C: float,
    events,
    delays,
    cap_at_capacity: bool = False,
    record: bool = False,
) -> Routing:
    """Can every event's deficit be shifted into its window at capacity ``C``?

    Sweeps slots forward in time keeping pending shifted load in a heap keyed
    by deadline (latest slot it may land in). Ordinary slots absorb pending
    load up to their spare capacity, earliest deadline first. An event slot
    first absorbs into its own spare capacity (if any), then emits its own
    deficit and relays further pending load, both with deadline
    ``t + delay``, as long as the total it sheds stays within its own new
    load ``C * lhat(t)``.
    """
    c_res, lhat = series.c_res, series.lhat
    T = series.T
    events = [int(t) for t in events]
    delay_of = dict(zip(events, (int(d) for d in delays)))
    eps = 1e-14 * max(1.0, abs(C), float(np.max(np.abs(c_res))) if T else 1.0)

    spare = c_res - C * lhat
    if cap_at_capacity:
        spare = np.minimum(spare, C * (1.0 - lhat))
    others = np.ones(T, dtype=bool)
    others[events] = False
    reduction = {t: 0.0 for t in events}
    arrivals = []
    if np.any(spare[others] < -eps):
        return Routing(False, reduction, arrivals)

    heap = []  # [deadline, seq, amount, origin]
    seq = 0
    ev_sorted = sorted(events)
    ei = 0
    t = ev_sorted[0] if ev_sorted else T

    def take(limit, amount, dest):
        """Pop up to ``amount`` kW with deadline <= ``limit`` from the heap."""
        taken = []
        while amount > eps and heap and heap[0][0] <= limit:
            item = heap[0]
            q = min(item[2], amount)
            amount -= q
            item[2] -= q
            taken.append((item[3], q))
            if item[2] <= eps:
                heapq.heappop(heap)
        if record:
            arrivals.extend((origin, dest, q) for origin, q in taken)
        return taken

    while t < T:
        while heap and heap[0][2] <= eps:
            heapq.heappop(heap)
        if heap and heap[0][0] < t:
            return Routing(False, reduction, arrivals)
        s = spare[t]
        if ei < len(ev_sorted) and ev_sorted[ei] == t:
            ei += 1
            deadline = min(t + delay_of[t], T - 1)
            if s > 0:
                take(T, s, t)
            own = max(0.0, -s)
            cap = C * lhat[t]
            if own > cap + eps:
                return Routing(False, reduction, arrivals)
            shed = own
            if deadline > t:
                relayed = take(deadline - 1, cap - own, t)
                moved = sum(q for _, q in relayed)
                shed += moved
                if shed > eps:
                    heapq.heappush(heap, [deadline, seq, shed, t])
                    seq += 1
            elif own > eps:
                return Routing(False, reduction, arrivals)
            reduction[t] = shed
        elif s > 0:
            take(T, s, t)
        while heap and heap[0][2] <= eps:
            heapq.heappop(heap)
        if heap:
            t += 1
        elif ei < len(ev_sorted):
            t = ev_sorted[ei]
        else:
            break
    leftover = sum(item[2] for item in heap)
    return Routing(leftover <= eps * max(1, len(events)), reduction, arrivals)


def _assemble(series, C, events, D, routing: Routing):
    K = len(events)
    col = {t: k for k, t in enumerate(events)}
    U = np.zeros((D + 1, K))
    for t, r in routing.reduction.items():
        U[0, col[t]] -= r
    for origin, dest, q in routing.arrivals:
        U[dest - origin, col[origin]] += q
    u = np.zeros(series.T)
    for k, t in enumerate(events):
        n = min(D + 1, series.T - t)
        u[t:t + n] += U[:n, k]
    return U, u


def max_violation(series: CapacitySeries, C: float, u: np.ndarray, cap_at_capacity: bool = False) -> float:
    load = C * series.lhat + u
    viol = float(np.max(load - series.c_res)) if series.T else 0.0
    if cap_at_capacity:
        viol = max(viol, float(np.max(load - C)))
    return viol


def _upper_bound(series: CapacitySeries, events) -> float:
    mask = np.ones(series.T, dtype=bool)
    mask[list(events)] = False
    if not mask.any():
        raise ValueError("every slot is an event; capacity is unbounded")
    hi = float(series.c_dyn[mask].min())
    if not np.isfinite(hi):
        raise ValueError("new-load profile is zero outside the events; capacity is unbounded")
    return hi


def solve_df(
    series: CapacitySeries,
    K: int,
    D: int,
    restrict_candidates: bool = False,
    cap_at_capacity: bool = False,
    horizon: str = "strict",
    rtol: float = 1e-12,
    max_iter: int = 200,
) -> DfPlan:
    """Maximum capacity with ``K`` delay events of at most ``D`` slots each.

    Events are the ``K`` lowest-ranked slots (see :func:`select_events` for
    the horizon handling). The capacity is bisected between the baseline
    ``C[1]`` (clamped at 0) and the smallest dynamic capacity among
    non-event slots, with :func:`route_deficits` as the feasibility oracle.
    The plan is flagged ``lower_bound_only`` when the window-slack
    assumption fails, since the event choice may then be suboptimal.
    """
    if series.structurally_infeasible.size:
        raise Infeasible("limit exceeded at slots where the new load is off")
    if K == 0:
        C = float(series.sorted[0])
        if C < 0:
            raise Infeasible(f"baseline capacity {C:.6g} kW is negative")
        return DfPlan(C, (), D, np.zeros((D + 1, 0)), np.zeros(series.T), (), A4Report((), (), ()),
                      thm3_ok=True)
    events, windows = select_events(series, K, D, restrict_candidates, horizon)
    delays = [D] * K
    D = _stored_depth(series, events, D, horizon)
    a4 = check_a4(series, events, windows, K)
    thm3 = check_thm3(series, K).ok if not restrict_candidates else None

    hi = _upper_bound(series, events)
    lo = max(float(series.sorted[0]), 0.0)
    lo = min(lo, hi)

    def feasible(C):
        return route_deficits(series, C, events, delays, cap_at_capacity).feasible

    if not feasible(lo):
        if lo > 0 and feasible(0.0):
            lo = 0.0
        else:
            raise Infeasible("no non-negative capacity admits a feasible delay schedule")
    if feasible(hi):
        C = hi
    else:
        for _ in range(max_iter):
            if hi - lo <= rtol * max(abs(hi), 1e-300):
                break
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        C = lo
    routing = route_deficits(series, C, events, delays, cap_at_capacity, record=True)
    U, u = _assemble(series, C, events, D, routing)
    plan = DfPlan(C, events, D, U, u, windows, a4, lower_bound_only=not a4.ok, thm3_ok=thm3,
                  meta={"horizon": horizon})
    if max_violation(series, C, u, cap_at_capacity) > CONSTRAINT_TOL * max(1.0, C):
        # should not happen; the LP covers any corner case the sweep mishandles
        if sum(b - a + 1 for a, b in windows) > LP_FALLBACK_MAX_SLOTS:
            raise LpNumericalFailure("greedy plan violates constraints and the instance is too large for the LP")
        plan = solve_df_lp(series, K, D, restrict_candidates, cap_at_capacity, horizon)
    return plan


def _stored_depth(series, events, D, horizon):
    """Rows needed in ``U``; clipped windows never reach past the last slot."""
    if horizon == "clip" and events:
        return min(D, series.T - 1 - min(events))
    return D


def solve_df_lp(
    series: CapacitySeries,
    K: int,
    D: int,
    restrict_candidates: bool = False,
    cap_at_capacity: bool = False,
    horizon: str = "strict",
) -> DfPlan:
    """Same problem as :func:`solve_df`, solved as one linear program.

    Variables are the capacity and the load shifted from each event to each
    of its ``D`` following slots. Slots outside all windows only bound the
    capacity and are folded into a single row.
    """
    if series.structurally_infeasible.size:
        raise Infeasible("limit exceeded at slots where the new load is off")
    if K == 0:
        return solve_df(series, 0, D)
    events, windows = select_events(series, K, D, restrict_candidates, horizon)
    D = _stored_depth(series, events, D, horizon)
    a4 = check_a4(series, events, windows, K)
    c_res, lhat = series.c_res, series.lhat
    nv = 1 + K * D
    last = series.T - 1

    def var(k, tau):
        return 1 + k * D + (tau - 1)

    def taus(k):
        return range(1, min(D, last - events[k]) + 1)

    rows, rhs = [], []
    in_window = np.zeros(series.T, dtype=bool)
    for a, b in windows:
        in_window[a:b + 1] = True
    ev_index = {t: k for k, t in enumerate(events)}
    for t in np.flatnonzero(in_window):
        t = int(t)
        row = np.zeros(nv)
        row[0] = lhat[t]
        if t in ev_index:
            k = ev_index[t]
            for tau in taus(k):
                row[var(k, tau)] -= 1.0
        for k, tk in enumerate(events):
            tau = t - tk
            if 1 <= tau <= D:
                row[var(k, tau)] += 1.0
        rows.append(row)
        rhs.append(c_res[t])
        if cap_at_capacity:
            r2 = row.copy()
            r2[0] = lhat[t] - 1.0
            rows.append(r2)
            rhs.append(0.0)
    for k, tk in enumerate(events):
        row = np.zeros(nv)
        row[0] = -lhat[tk]
        for tau in taus(k):
            row[var(k, tau)] = 1.0
        rows.append(row)
        rhs.append(0.0)
    outside = ~in_window
    if np.any(outside & (lhat == 0) & (c_res < 0)):
        raise Infeasible("limit exceeded at slots where the new load is off")
    on = outside & (lhat > 0)
    if on.any():
        row = np.zeros(nv)
        row[0] = 1.0
        rows.append(row)
        rhs.append(float(np.min(c_res[on] / lhat[on])))
    cvec = np.zeros(nv)
    cvec[0] = 1.0
    try:
        res = simplex_max(cvec, np.array(rows), np.array(rhs))
    except LpInfeasible:
        raise Infeasible("no non-negative capacity admits a feasible delay schedule") from None
    C = float(res.x[0])
    U = np.zeros((D + 1, K))
    for k in range(K):
        shifts = np.array([res.x[var(k, tau)] if tau in taus(k) else 0.0 for tau in range(1, D + 1)])
        U[1:, k] = shifts
        U[0, k] = -shifts.sum()
    u = np.zeros(series.T)
    for k, t in enumerate(events):
        n = min(D + 1, series.T - t)
        u[t:t + n] += U[:n, k]
    thm3 = check_thm3(series, K).ok if not restrict_candidates else None
    return DfPlan(C, events, D, U, u, windows, a4, lower_bound_only=not a4.ok, thm3_ok=thm3, method="lp",
                  meta={"horizon": horizon})


def minimal_delays(plan: DfPlan, series: CapacitySeries, cap_at_capacity: bool = False) -> DfPlan:
    """Shrink each event's delay window as far as feasibility at ``plan.capacity`` allows.

    Events are visited from the latest to the earliest; each gets the
    smallest delay (binary search, feasibility is monotone in every delay)
    given the delays already fixed. The result cannot be reduced in any
    single coordinate without losing feasibility.
    """
    if plan.K == 0:
        return replace(plan, minimal_delays=())
    events = list(plan.events)
    delays = [plan.D] * plan.K
    C = plan.capacity

    def ok(ds):
        return route_deficits(series, C, events, ds, cap_at_capacity).feasible

    if not ok(delays):
        raise Infeasible("plan is not feasible at its own capacity")
    for k in sorted(range(plan.K), key=lambda k: events[k], reverse=True):
        lo, hi = 0, delays[k]
        while lo < hi:
            mid = (lo + hi) // 2
            trial = list(delays)
            trial[k] = mid
            if ok(trial):
                hi = mid
            else:
                lo = mid + 1
        delays[k] = lo
    routing = route_deficits(series, C, events, delays, cap_at_capacity, record=True)
    U, u = _assemble(series, C, events, plan.D, routing)
    return replace(plan, U=U, u=u, minimal_delays=tuple(delays))


def delay_histogram(plan: DfPlan) -> tuple[np.ndarray, np.ndarray]:
    """Counts of minimal delays ``0..D`` (in slots)."""
    if plan.minimal_delays is None:
        raise ValueError("run minimal_delays first")
    counts = np.bincount(np.asarray(plan.minimal_delays, dtype=int), minlength=plan.D + 1)
    return counts, np.arange(plan.D + 1)


def write_plan_json(plan: DfPlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_json_dict(), indent=1) + "\n")
