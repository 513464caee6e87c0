"""Dynamic residual / hosting capacity and their order statistics.

Slots are 0-indexed everywhere in code; ranks are 1-indexed to match the
usual order-statistic notation (rank 1 is the smallest capacity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import LoadSet, NewLoadSpec, format_number
from .errors import RankOutOfRange


def _ro(a) -> np.ndarray:
    arr = np.array(a, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CapacitySeries:
    """Per-slot capacities for one new-load profile.

    ``c_dyn`` is ``+inf`` where the profile is zero. ``order[s-1]`` is the
    slot holding the ``s``-th smallest dynamic hosting capacity; ties are
    broken by the smaller slot index.
    """

    c_res: np.ndarray
    c_dyn: np.ndarray
    order: np.ndarray
    sorted: np.ndarray
    lhat: np.ndarray
    binding: tuple | None = field(default=None, compare=False)

    @property
    def T(self) -> int:
        return self.c_res.shape[0]

    @property
    def structurally_infeasible(self) -> np.ndarray:
        """Slots where the new load is off but the limit is already exceeded.

        No modification of the new load can repair these slots.
        """
        return np.flatnonzero((self.lhat == 0) & (self.c_res < 0))

    @property
    def rank(self) -> np.ndarray:
        """1-indexed rank of each slot."""
        r = np.empty(self.T, dtype=int)
        r[self.order] = np.arange(1, self.T + 1)
        return r


def dynamic_capacity(c_res, lhat) -> np.ndarray:
    c_res = np.asarray(c_res, dtype=float)
    lhat = np.asarray(lhat, dtype=float)
    out = np.full(c_res.shape, np.inf)
    on = lhat > 0
    out[on] = c_res[on] / lhat[on]
    return out


def series_from_residual(c_res, lhat, binding=None) -> CapacitySeries:
    """Build a :class:`CapacitySeries` from residual capacities and a profile."""
    c_res = np.asarray(c_res, dtype=float)
    lhat = np.asarray(lhat, dtype=float)
    if c_res.shape != lhat.shape:
        raise ValueError("residual capacity and profile must have the same length")
    c_dyn = dynamic_capacity(c_res, lhat)
    order = np.argsort(c_dyn, kind="stable")
    return CapacitySeries(
        c_res=_ro(c_res),
        c_dyn=_ro(c_dyn),
        order=_ro(order),
        sorted=_ro(c_dyn[order]),
        lhat=_ro(lhat),
        binding=None if binding is None else tuple(binding),
    )


def capacity_copperplate(loads: LoadSet, spec: NewLoadSpec, p0_max: float) -> CapacitySeries:
    """Transformer-only residual capacity ``p0_max - aggregate load``."""
    if spec.profile.shape[0] != loads.grid.T:
        raise ValueError("profile length does not match the load time grid")
    return series_from_residual(p0_max - loads.aggregate, spec.profile)


def order_stat(series: CapacitySeries, s: int) -> tuple[float, int]:
    """Return ``(C[s], t_s)`` for the 1-indexed rank ``s``."""
    if not 1 <= s <= series.T:
        raise RankOutOfRange(f"rank {s} outside 1..{series.T}")
    return float(series.sorted[s - 1]), int(series.order[s - 1])


def format_capacity_csv(series: CapacitySeries) -> str:
    rank = series.rank
    rows = ["slot,c_res_kw,c_dyn_kw,rank"]
    for t in range(series.T):
        c_dyn = series.c_dyn[t]
        rows.append(
            f"{t},{format_number(series.c_res[t])},{'inf' if np.isinf(c_dyn) else format_number(c_dyn)},{rank[t]}"
        )
    return "\n".join(rows) + "\n"


def write_capacity_csv(series: CapacitySeries, path) -> None:
    Path(path).write_text(format_capacity_csv(series))
