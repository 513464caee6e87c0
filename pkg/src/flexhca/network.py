"""Linearized DistFlow sensitivities and network-aware capacities.

Voltages follow ``v(t) = v0 - 2 Z(t) l(t)`` with ``Z(t) = R + X diag(eta(t))``
expressed in per-unit voltage per kW of load, ``R``/``X`` being the
common-path resistance/reactance matrices of the radial feeder.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .capacity import CapacitySeries, series_from_residual
from .data_model import FeederModel, LoadSet, NewLoadSpec
from .errors import DisconnectedBus, NotATree, ThmFourPreconditionViolated, UpperBoundUnsafe


@dataclass(frozen=True)
class ImpedanceMatrices:
    """Common-path matrices in per unit, plus the data needed to form ``Z``."""

    R: np.ndarray
    X: np.ndarray
    eta: np.ndarray
    base_kw: float
    bus_ids: tuple

    @property
    def time_varying(self) -> bool:
        return self.eta.ndim == 2

    def Z(self, t: int | None = None) -> np.ndarray:
        """``Z(t)`` in per-unit voltage per kW (``t`` ignored if eta is static)."""
        eta = self.eta[:, t] if self.time_varying else self.eta
        return (self.R + self.X * eta[np.newaxis, :]) / self.base_kw

    def column(self, j: int) -> np.ndarray:
        """``Z_{i,j}(t)`` for all ``i`` as an ``(n, 1)`` or ``(n, T)`` array."""
        eta_j = self.eta[j] if not self.time_varying else self.eta[j][np.newaxis, :]
        col = self.R[:, [j]] + self.X[:, [j]] * eta_j
        return col / self.base_kw

    def apply(self, lmat: np.ndarray) -> np.ndarray:
        """``Z(t) l(t)`` for every column ``t`` of the ``(n, T)`` load matrix."""
        eta = self.eta if self.time_varying else self.eta[:, np.newaxis]
        return (self.R @ lmat + self.X @ (eta * lmat)) / self.base_kw

    def min_entry(self) -> float:
        if self.time_varying:
            lo = self.eta.min(axis=1)
            return float(((self.R + self.X * lo[np.newaxis, :]) / self.base_kw).min())
        return float(self.Z().min())


def _root_paths(feeder: FeederModel) -> list[list[int]]:
    """For each non-root bus, the indices of the lines on its path to the root."""
    buses = feeder.buses
    n = len(buses) - 1
    if len(feeder.lines) != n:
        raise NotATree(f"{n + 1} buses need exactly {n} lines, got {len(feeder.lines)}")
    known = set(buses)
    adj = {b: [] for b in buses}
    for k, ln in enumerate(feeder.lines):
        if ln.from_bus not in known or ln.to_bus not in known:
            raise NotATree(f"line {ln.from_bus}-{ln.to_bus} references an unknown bus")
        if ln.from_bus == ln.to_bus:
            raise NotATree(f"self-loop at bus {ln.from_bus}")
        adj[ln.from_bus].append((ln.to_bus, k))
        adj[ln.to_bus].append((ln.from_bus, k))
    path = {0: []}
    queue = deque([0])
    while queue:
        b = queue.popleft()
        for nb, k in adj[b]:
            if nb in path:
                if path[b] and path[b][-1] == k:
                    continue
                raise NotATree(f"cycle through bus {nb}")
            path[nb] = path[b] + [k]
            queue.append(nb)
    missing = [b for b in buses if b not in path]
    if missing:
        raise DisconnectedBus(f"buses not reachable from the root: {missing}")
    return [path[b] for b in feeder.load_buses]


def build_impedance(feeder: FeederModel) -> ImpedanceMatrices:
    """Common-path ``R``/``X`` matrices of a radial feeder.

    ``R[i, j]`` sums the resistances of the lines shared by the root paths of
    buses ``i`` and ``j``.
    """
    paths = _root_paths(feeder)
    n = feeder.n
    P = np.zeros((n, len(feeder.lines)))
    for i, p in enumerate(paths):
        P[i, p] = 1.0
    r = np.array([ln.r for ln in feeder.lines])
    x = np.array([ln.x for ln in feeder.lines])
    R = (P * r) @ P.T
    X = (P * x) @ P.T
    # exact symmetry regardless of summation order
    R = np.triu(R) + np.triu(R, 1).T
    X = np.triu(X) + np.triu(X, 1).T
    return ImpedanceMatrices(R=R, X=X, eta=np.asarray(feeder.eta), base_kw=feeder.base_kw, bus_ids=feeder.load_buses)


def node_voltages(lmat: np.ndarray, zmats: ImpedanceMatrices, feeder: FeederModel) -> np.ndarray:
    """Bus voltages ``(n, T)`` for a load matrix in feeder bus order."""
    return feeder.v0 - 2.0 * zmats.apply(lmat)


def check_preconditions(feeder: FeederModel, zmats: ImpedanceMatrices) -> None:
    if np.any(feeder.v_upper < feeder.v0):
        bad = [feeder.load_buses[i] for i in np.flatnonzero(feeder.v_upper < feeder.v0)]
        raise UpperBoundUnsafe(f"v_upper below v0 at buses {bad[:10]}")
    if zmats.min_entry() <= 0:
        raise ThmFourPreconditionViolated("Z has non-positive entries (disjoint root paths or negative eta)")


def capacity_network(
    loads: LoadSet,
    spec: NewLoadSpec,
    feeder: FeederModel,
    zmats: ImpedanceMatrices | None = None,
    check: bool = True,
) -> CapacitySeries:
    """Residual capacity at the attachment bus under transformer and voltage limits.

    ``binding`` on the result names the tightest limit per slot, either
    ``"transformer"`` or ``"voltage@<bus>"``.
    """
    if zmats is None:
        zmats = build_impedance(feeder)
    if check:
        check_preconditions(feeder, zmats)
    if spec.profile.shape[0] != loads.grid.T:
        raise ValueError("profile length does not match the load time grid")
    j = feeder.bus_index(spec.attach_bus)
    lmat = feeder.load_matrix(loads)
    transformer = feeder.p0_max_kw - loads.aggregate
    zl = zmats.apply(lmat)
    zcol = zmats.column(j)
    headroom = (feeder.v0 - feeder.v_lower)[:, np.newaxis] - 2.0 * zl
    with np.errstate(divide="ignore", invalid="ignore"):
        per_bus = np.where(zcol > 0, headroom / (2.0 * zcol), np.inf)
    worst = np.argmin(per_bus, axis=0)
    voltage = per_bus[worst, np.arange(loads.grid.T)]
    c_res = np.minimum(transformer, voltage)
    bus_ids = feeder.load_buses
    binding = tuple(
        "transformer" if tr <= v else f"voltage@{bus_ids[w]}" for tr, v, w in zip(transformer, voltage, worst)
    )
    return series_from_residual(c_res, spec.profile, binding=binding)


def write_binding_csv(series: CapacitySeries, path) -> None:
    if series.binding is None:
        raise ValueError("series carries no binding-constraint information")
    body = "".join(f"{t},{b}\n" for t, b in enumerate(series.binding))
    Path(path).write_text("slot,binding\n" + body)
