"""Hosting capacity under curtailment flexibility.

With at most ``K`` curtailed slots the optimal capacity is the ``(K+1)``-th
smallest dynamic hosting capacity; the curtailed slots are the ``K``
lowest-ranked ones.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capacity import CapacitySeries
from .errors import Infeasible, NonnegativityViolated

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class CfPlan:
    capacity: float
    u: dict  # slot -> curtailment in kW (negative)
    K: int
    mu: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def intervened_slots(self) -> list[int]:
        return sorted(self.u)

    @property
    def depths(self) -> dict:
        if self.capacity <= 0:
            return {t: 0.0 for t in self.u}
        return {t: -v / self.capacity for t, v in self.u.items()}

    def dense_u(self, T: int) -> np.ndarray:
        out = np.zeros(T)
        for t, v in self.u.items():
            out[t] = v
        return out

    def to_json_dict(self) -> dict:
        depths = self.depths
        return {
            "capacity_kw": self.capacity,
            "slots": [{"t": t, "u_kw": self.u[t], "depth_frac": depths[t]} for t in self.intervened_slots],
            "k_used": len(self.u),
        }


def _check_structural(series: CapacitySeries) -> None:
    bad = series.structurally_infeasible
    if bad.size:
        raise Infeasible(f"limit exceeded while the new load is off at slots {bad[:10].tolist()}")


def _validate_K(series: CapacitySeries, K: int) -> None:
    if not 0 <= K <= series.T - 1:
        raise ValueError(f"K must lie in 0..T-1 = 0..{series.T - 1}, got {K}")


def solve_cf(series: CapacitySeries, K: int) -> CfPlan:
    """Exact CF solution: capacity ``C[K+1]`` and minimal curtailments."""
    _validate_K(series, K)
    _check_structural(series)
    C = float(series.sorted[K])
    if not np.isfinite(C):
        raise ValueError(f"capacity is unbounded: the new load is off at all but {K} or fewer slots")
    if C < 0:
        raise Infeasible(f"C[K+1] = {C:.6g} kW < 0: no positive load fits even with {K} curtailments")
    u = {}
    bad = []
    for s in range(K):
        t = int(series.order[s])
        if series.sorted[s] < C:
            if series.c_res[t] < 0:
                bad.append(t)
            u[t] = float(series.c_res[t] - C * series.lhat[t])
    if bad:
        raise NonnegativityViolated(
            f"negative residual capacity at intervened slots {bad[:10]}; curtailing the new load cannot help",
            slots=bad,
        )
    return CfPlan(capacity=C, u=u, K=K)


def _bounded_feasible(series: CapacitySeries, K: int, mu: float, C: float) -> bool:
    need = C * series.lhat > series.c_res
    if np.count_nonzero(need) > K:
        return False
    if np.any(series.c_res[need] < 0):
        return False
    return bool(np.all(C * (series.lhat[need] - mu) <= series.c_res[need]))


def solve_cf_bounded(series: CapacitySeries, K: int, mu: float, rtol: float = 1e-9, max_iter: int = 200) -> CfPlan:
    """CF with curtailment depth capped at ``mu * C`` per intervention.

    Bisection on ``C`` over ``[0, C[K+1]]``; the bracket is then snapped to
    the largest feasible breakpoint (a value ``c_dyn(t)`` or
    ``c_res(t) / (lhat(t) - mu)``) inside it, which makes the result exact
    whenever the breakpoints are representable.
    """
    _validate_K(series, K)
    if not 0 <= mu <= 1:
        raise ValueError("mu must lie in [0, 1]")
    _check_structural(series)
    hi = float(series.sorted[K])
    if not np.isfinite(hi):
        raise ValueError("capacity is unbounded: the new load is off almost everywhere")
    if hi < 0 or not _bounded_feasible(series, K, mu, 0.0):
        raise Infeasible("no non-negative capacity is feasible")
    if _bounded_feasible(series, K, mu, hi):
        C = hi
    else:
        lo = 0.0
        for _ in range(max_iter):
            if hi - lo <= rtol * max(hi, 1e-300):
                break
            mid = 0.5 * (lo + hi)
            if _bounded_feasible(series, K, mu, mid):
                lo = mid
            else:
                hi = mid
        C = lo
        lhat, c_res = series.lhat, series.c_res
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.concatenate([series.c_dyn, np.where(lhat > mu, c_res / (lhat - mu), np.inf)])
        cand = cand[np.isfinite(cand) & (cand >= lo) & (cand <= hi)]
        for c in np.sort(cand)[::-1]:
            if _bounded_feasible(series, K, mu, float(c)):
                C = float(c)
                break
    if C <= 0 and hi > 0:
        # C = 0 is always feasible; report it only when nothing positive is
        raise Infeasible("no positive capacity is feasible")
    need = np.flatnonzero(C * series.lhat > series.c_res)
    u = {int(t): float(max(series.c_res[t] - C * series.lhat[t], -mu * C)) for t in need}
    return CfPlan(capacity=C, u=u, K=K, mu=mu)


@dataclass(frozen=True)
class SweepRow:
    K: int
    mu: float | None
    capacity: float
    gain_percent: float


def gain_percent(C: float, C0: float) -> float:
    if C0 <= 0:
        return float("nan")
    return (C - C0) / C0 * 100.0


def sweep_cf(series: CapacitySeries, K_list, mu_list=(None,), jobs: int = 1) -> list[SweepRow]:
    """Capacities and gains for every ``(K, mu)`` pair; ``mu=None`` is unbounded.

    Rows are ordered by ``mu`` (as given) then ``K`` (as given).
    """
    C0 = solve_cf(series, 0).capacity
    cells = [(K, mu) for mu in mu_list for K in K_list]

    def run(cell):
        K, mu = cell
        plan = solve_cf(series, K) if mu is None else solve_cf_bounded(series, K, mu)
        return SweepRow(K, mu, plan.capacity, gain_percent(plan.capacity, C0))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def depth_histogram(plan: CfPlan, bins=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts of curtailment depths (fraction of capacity) per bin."""
    if bins is None:
        bins = np.linspace(0.0, 1.0, 21)
    depths = np.array(list(plan.depths.values()), dtype=float)
    counts, edges = np.histogram(depths, bins=bins)
    return counts, edges


def write_plan_json(plan: CfPlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_json_dict(), indent=1) + "\n")
