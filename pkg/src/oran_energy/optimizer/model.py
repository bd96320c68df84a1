"""Problem instance, allocation and the constraint checker."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TOL = 1e-9


class OptimizerError(Exception):
    pass


class StructuralError(OptimizerError):
    pass


class InfeasibleLinkError(OptimizerError):
    pass


class Infeasible(OptimizerError):
    """No allocation satisfies every constraint."""


class OracleTooLarge(OptimizerError):
    pass


class Optimality(str, enum.Enum):
    PROVED_OPTIMAL = "ProvedOptimal"
    HEURISTIC = "Heuristic"


class ConstraintId(str, enum.Enum):
    ASSOC = "Assoc"
    POWER_BOUND = "PowerBound"
    POWER_ZERO_WHEN_OFF = "PowerZeroWhenOff"
    NO_USERS_WHEN_OFF = "NoUsersWhenOff"
    POWER_FLOOR_WHEN_ON = "PowerFloorWhenOn"
    BANDWIDTH_CAP = "BandwidthCap"
    RATE_DEMAND = "RateDemand"


@dataclass(frozen=True)
class Violation:
    constraint_id: ConstraintId
    subject: int   # UE id for Assoc/RateDemand, O-RU id otherwise
    magnitude: float


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One time step of the load-balancing problem.

    Arrays are indexed by position; ``ue_ids`` and ``oru_ids`` map positions
    to ids and must be strictly increasing.
    """
    ue_ids: tuple[int, ...]
    demand: np.ndarray          # (n,) bit/s
    oru_ids: tuple[int, ...]
    max_power: np.ndarray       # (m,) W
    max_bandwidth: np.ndarray   # (m,) Hz
    static_power: np.ndarray    # (m,) W
    efficiency: np.ndarray      # (m,)
    gain: np.ndarray            # (n, m) linear
    noise_sigma2: float
    epsilon: float
    power_levels: tuple[tuple[float, ...], ...]  # per O-RU, ascending

    def __post_init__(self):
        n, m = len(self.ue_ids), len(self.oru_ids)
        for name in ("demand", "max_power", "max_bandwidth", "static_power", "efficiency", "gain"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "ue_ids", tuple(int(i) for i in self.ue_ids))
        object.__setattr__(self, "oru_ids", tuple(int(i) for i in self.oru_ids))
        object.__setattr__(self, "power_levels",
                           tuple(tuple(float(p) for p in lv) for lv in self.power_levels))
        if any(b <= a for a, b in zip(self.ue_ids, self.ue_ids[1:])):
            raise StructuralError("ue_ids must be strictly increasing")
        if any(b <= a for a, b in zip(self.oru_ids, self.oru_ids[1:])):
            raise StructuralError("oru_ids must be strictly increasing")
        if self.demand.shape != (n,) or self.gain.shape != (n, m):
            raise StructuralError("demand/gain shapes do not match ids")
        for name in ("max_power", "max_bandwidth", "static_power", "efficiency"):
            if getattr(self, name).shape != (m,):
                raise StructuralError(f"{name} must have one entry per O-RU")
        if len(self.power_levels) != m:
            raise StructuralError("power_levels must have one grid per O-RU")
        if np.any(self.gain <= 0):
            raise StructuralError("all channel gains must be > 0")
        if np.any(self.demand < 0):
            raise StructuralError("demands must be >= 0")
        if self.epsilon <= 0 or self.noise_sigma2 <= 0:
            raise StructuralError("epsilon and noise_sigma2 must be > 0")
        for j, levels in enumerate(self.power_levels):
            if not levels or list(levels) != sorted(set(levels)):
                raise StructuralError(f"O-RU {self.oru_ids[j]}: power levels must be "
                                      "non-empty, ascending and distinct")
            if levels[0] < self.epsilon or levels[-1] > self.max_power[j]:
                raise StructuralError(f"O-RU {self.oru_ids[j]}: power levels outside "
                                      "[epsilon, max_power]")

    @property
    def n_ues(self) -> int:
        return len(self.ue_ids)

    @property
    def n_orus(self) -> int:
        return len(self.oru_ids)

    def oru_index(self, oru_id: int) -> int:
        try:
            return self._oru_pos[oru_id]
        except KeyError:
            raise StructuralError(f"unknown O-RU id {oru_id}") from None

    @property
    def _oru_pos(self) -> dict[int, int]:
        cache = self.__dict__.get("_oru_pos_cache")
        if cache is None:
            cache = {r: j for j, r in enumerate(self.oru_ids)}
            object.__setattr__(self, "_oru_pos_cache", cache)
        return cache

    def level_cost(self, j: int, power: float) -> float:
        return power / self.efficiency[j] + self.static_power[j]


@dataclass(frozen=True)
class Allocation:
    assoc_x: Mapping[int, int]                  # UE id -> O-RU id
    bandwidth_y: Mapping[tuple[int, int], float]  # (UE id, O-RU id) -> Hz
    power_w: Mapping[int, float]                # O-RU id -> W
    active_z: frozenset[int]
    objective_watts: float

    @property
    def active_count(self) -> int:
        return len(self.active_z)


@dataclass(frozen=True)
class SolveReport:
    allocation: Allocation
    nodes_explored: int
    wall_time: float = field(compare=False)
    optimality: Optimality


def min_bandwidth(demand: float, snr_linear: float) -> float:
    """Smallest bandwidth (Hz) carrying ``demand`` bit/s at the given SNR."""
    if demand < 0:
        raise ValueError("demand must be >= 0")
    if demand == 0:
        return 0.0
    if snr_linear <= 0:
        raise InfeasibleLinkError("zero SNR cannot carry a positive demand")
    return demand / math.log2(1.0 + snr_linear)


def bandwidth_table(inst: ProblemInstance, j: int, power: float) -> np.ndarray:
    """min_bandwidth for every UE on O-RU ``j`` at ``power`` (inf when unusable)."""
    snr = inst.gain[:, j] * power / inst.noise_sigma2
    with np.errstate(divide="ignore"):
        se = np.log2(1.0 + snr)
        bw = np.where(inst.demand == 0, 0.0, inst.demand / se)
    return bw


def objective(inst: ProblemInstance, alloc: Allocation) -> float:
    """Total power draw: sum over active O-RUs of w/eta + theta."""
    for r in alloc.active_z:
        inst.oru_index(r)
    for r in alloc.power_w:
        inst.oru_index(r)
    total = 0.0
    for j, r in enumerate(inst.oru_ids):
        if r in alloc.active_z:
            total += inst.level_cost(j, float(alloc.power_w.get(r, 0.0)))
    return total


def config_objective(inst: ProblemInstance, powers: Sequence[float | None]) -> float:
    """Objective for per-O-RU powers in index order (None = inactive).

    Summation order matches :func:`objective` so both give identical floats.
    """
    total = 0.0
    for j, p in enumerate(powers):
        if p is not None:
            total += inst.level_cost(j, p)
    return total


def all_on_objective(inst: ProblemInstance) -> float:
    """Trivial baseline: every O-RU active at its maximum power."""
    return config_objective(inst, [float(g) for g in inst.max_power])


def build_allocation(inst: ProblemInstance, assoc: Mapping[int, int],
                     powers: Mapping[int, float]) -> Allocation:
    """Allocation with minimal bandwidths for ``assoc`` and the given active powers."""
    active = frozenset(powers)
    power_w = {r: float(powers.get(r, 0.0)) for r in inst.oru_ids}
    bandwidth = {}
    for i, u in enumerate(inst.ue_ids):
        r = assoc[u]
        j = inst.oru_index(r)
        s = inst.gain[i, j] * power_w[r] / inst.noise_sigma2
        bandwidth[(u, r)] = min_bandwidth(float(inst.demand[i]), s)
    obj = config_objective(inst, [power_w[r] if r in active else None for r in inst.oru_ids])
    return Allocation(assoc_x=dict(assoc), bandwidth_y=bandwidth, power_w=power_w,
                      active_z=active, objective_watts=obj)


def check_feasible(inst: ProblemInstance, alloc: Allocation) -> list[Violation]:
    """Every constraint violation of ``alloc``, one per root cause.

    UEs attached to an inactive O-RU are reported once (NoUsersWhenOff on the
    O-RU); their rate and that O-RU's bandwidth are not re-reported.
    """
    out: list[Violation] = []
    known_orus = set(inst.oru_ids)
    ue_pos = {u: i for i, u in enumerate(inst.ue_ids)}

    for u in inst.ue_ids:
        r = alloc.assoc_x.get(u)
        if r is None or r not in known_orus:
            out.append(Violation(ConstraintId.ASSOC, u, 1.0))
    for u in alloc.assoc_x:
        if u not in ue_pos:
            out.append(Violation(ConstraintId.ASSOC, u, 1.0))

    attached: dict[int, list[int]] = {r: [] for r in inst.oru_ids}
    for u, r in alloc.assoc_x.items():
        if u in ue_pos and r in attached:
            attached[r].append(u)
    used = {r: 0.0 for r in inst.oru_ids}
    for (u, r), y in alloc.bandwidth_y.items():
        if r in used:
            used[r] += y

    for j, r in enumerate(inst.oru_ids):
        w = float(alloc.power_w.get(r, 0.0))
        gamma = float(inst.max_power[j])
        rho = float(inst.max_bandwidth[j])
        on = r in alloc.active_z
        if w > gamma * (1 + TOL):
            out.append(Violation(ConstraintId.POWER_BOUND, r, w - gamma))
        elif w < 0:
            out.append(Violation(ConstraintId.POWER_BOUND, r, -w))
        if not on:
            if w > TOL * gamma:
                out.append(Violation(ConstraintId.POWER_ZERO_WHEN_OFF, r, w))
            if attached[r]:
                out.append(Violation(ConstraintId.NO_USERS_WHEN_OFF, r, float(len(attached[r]))))
            elif used[r] > 0:
                out.append(Violation(ConstraintId.BANDWIDTH_CAP, r, used[r]))
            continue
        if w < inst.epsilon * (1 - TOL):
            out.append(Violation(ConstraintId.POWER_FLOOR_WHEN_ON, r, inst.epsilon - w))
        if used[r] > rho * (1 + TOL):
            out.append(Violation(ConstraintId.BANDWIDTH_CAP, r, used[r] - rho))
        for u in attached[r]:
            i = ue_pos[u]
            lam = float(inst.demand[i])
            s = inst.gain[i, j] * max(w, 0.0) / inst.noise_sigma2
            rate = alloc.bandwidth_y.get((u, r), 0.0) * math.log2(1.0 + s)
            if rate < lam * (1 - TOL):
                out.append(Violation(ConstraintId.RATE_DEMAND, u, lam - rate))
    return out


def assoc_distance(prev: Allocation, nxt: Allocation) -> int:
    """Number of UEs served by a different O-RU in ``nxt`` than in ``prev``."""
    if set(prev.assoc_x) != set(nxt.assoc_x):
        raise StructuralError("allocations cover different UE sets")
    return sum(1 for u, r in prev.assoc_x.items() if nxt.assoc_x[u] != r)
