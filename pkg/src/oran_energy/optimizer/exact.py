"""Exact best-first branch and bound over O-RU activation and power levels.

Each O-RU takes one option: off (0) or power level ``l`` (``l + 1``). For a
fully decided configuration the association is a bin-packing feasibility
problem over bandwidths, solved by :func:`pack`: cheap heuristics and
relaxation certificates first, then a small integer program.

Candidate configurations are ranked by a total order, ``(objective, active
count, forced moves, active ids, total power, -options)``, shared
with the brute-force oracle, so both return the same configuration.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import (TOL, Allocation, Infeasible, Optimality, ProblemInstance, SolveReport,
                    bandwidth_table, build_allocation, config_objective)


def config_key(inst: ProblemInstance, options: Sequence[int],
               prev_oru: Sequence[int] | None = None) -> tuple:
    """Total order on configurations: objective, active count, forced moves,
    active ids, total power.

    Forced moves are UEs whose previous O-RU is off in ``options``; they
    must hand over whatever the association.
    """
    forced = 0 if prev_oru is None else sum(1 for j in prev_oru if j >= 0 and not options[j])
    powers = [None if o == 0 else inst.power_levels[j][o - 1] for j, o in enumerate(options)]
    active = tuple(inst.oru_ids[j] for j, o in enumerate(options) if o)
    total_power = 0.0
    for p in powers:
        if p is not None:
            total_power += p
    return (config_objective(inst, powers), len(active), forced, active, total_power,
            tuple(-o for o in options))


class Tables:
    """Per (O-RU, level) bandwidth vectors, shared by the exact and greedy solvers."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.bw = [np.stack([bandwidth_table(inst, j, p) for p in levels], axis=1)
                   for j, levels in enumerate(inst.power_levels)]  # each (n, L_j)
        self.cap = inst.max_bandwidth * (1 + TOL)
        for j in range(inst.n_orus):
            self.bw[j] = np.where(self.bw[j] > self.cap[j], np.inf, self.bw[j])
        # normalized load at the best (highest) level of each O-RU
        self.best_load = np.stack([self.bw[j][:, -1] / self.cap[j]
                                   for j in range(inst.n_orus)], axis=1)
        self.cost = [[inst.level_cost(j, p) for p in levels]
                     for j, levels in enumerate(inst.power_levels)]
        n, m = inst.n_ues, inst.n_orus
        # cheapest watts per unit of normalized load, per UE and O-RU
        unit = np.stack([np.min(self.bw[j] / self.cap[j] * np.asarray(self.cost[j]), axis=1)
                         for j in range(m)], axis=1) if m else np.zeros((n, 0))
        # suffix minima over O-RUs j >= d, column m is the empty suffix
        self.suffix_load = np.full((n, m + 1), np.inf)
        self.suffix_unit = np.full((n, m + 1), np.inf)
        for d in range(m - 1, -1, -1):
            self.suffix_load[:, d] = np.minimum(self.suffix_load[:, d + 1], self.best_load[:, d])
            self.suffix_unit[:, d] = np.minimum(self.suffix_unit[:, d + 1], unit[:, d])
        self.suffix_costs = [sorted(self.cost[j][0] for j in range(d, m)) for d in range(m + 1)]

    def column(self, j: int, option: int) -> np.ndarray:
        return self.bw[j][:, option - 1]


def symmetry_classes(inst: ProblemInstance, prev_oru: Sequence[int] | None = None) -> list[int]:
    """For each O-RU, the index of the previous identical O-RU (or -1).

    With a previous association, O-RUs are identical only if they also
    served the same number of UEs.
    """
    served = [0] * inst.n_orus
    for j in prev_oru or ():
        if j >= 0:
            served[j] += 1
    prev = [-1] * inst.n_orus
    seen: dict[tuple, int] = {}
    for j in range(inst.n_orus):
        sig = (float(inst.max_power[j]), float(inst.max_bandwidth[j]),
               float(inst.static_power[j]), float(inst.efficiency[j]),
               inst.power_levels[j], inst.gain[:, j].tobytes(), served[j])
        if sig in seen:
            prev[j] = seen[sig]
        seen[sig] = j
    return prev


# ---------------------------------------------------------------------------
# association packing

def pack(bw: np.ndarray, cap: np.ndarray, prev: Sequence[int] | None = None,
         counter: list[int] | None = None) -> np.ndarray | None:
    """Assign every row (UE) to a column (active O-RU) within capacities.

    ``bw[u, a]`` is the bandwidth UE ``u`` needs on column ``a`` (inf when it
    cannot be served). ``prev[u]`` is a preferred column or -1. Returns the
    column per UE, or None when no assignment exists.
    """
    n, k = bw.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    if k == 0:
        return None
    load = bw / cap
    min_load = load.min(axis=1)
    if not np.all(np.isfinite(min_load)):
        return None
    if min_load.sum() > k + 1e-12:
        return None

    if _price_certificate(load):
        return None
    sol = _pack_heuristic(bw, cap, prev, order_key=-min_load)
    if sol is not None:
        return sol
    second = np.partition(load, 1, axis=1)[:, 1] if k > 1 else min_load
    regret = np.where(np.isfinite(second), second - min_load, np.inf)
    sol = _pack_heuristic(bw, cap, prev, order_key=-regret)
    if sol is not None:
        return sol
    if not _subset_feasible(load) or not _lp_feasible(bw, cap):
        return None
    return _pack_milp(bw, cap, prev, counter)


def _pack_heuristic(bw, cap, prev, order_key) -> np.ndarray | None:
    n, k = bw.shape
    residual = [float(c) for c in cap]
    out = np.full(n, -1, dtype=int)
    order = np.lexsort((np.arange(n), order_key))
    # columns by increasing relative load, per UE
    ranked = np.argsort(bw / cap, axis=1, kind="stable").tolist()
    rows = bw.tolist()
    for u in order.tolist():
        row = rows[u]
        p = -1 if prev is None else prev[u]
        if p >= 0 and row[p] <= residual[p]:
            choice = p
        else:
            choice = next((a for a in ranked[u] if row[a] <= residual[a]), None)
            if choice is None:
                return None
        out[u] = choice
        residual[choice] -= row[choice]
    return out


def _price_certificate(load: np.ndarray, iters: int = 60, step: float = 0.5) -> bool:
    """Search O-RU prices proving the fractional assignment infeasible.

    With prices p >= 0, every fractional assignment spends at least
    sum_u min_a p_a * load[u, a] while the O-RUs offer sum_a p_a; a strictly
    larger spend is a certificate of infeasibility.
    """
    n, k = load.shape
    price = np.ones(k)
    rows = np.arange(n)
    for _ in range(iters):
        cost = load * price
        best = cost.argmin(axis=1)
        spend = cost[rows, best].sum()
        if spend > price.sum() * (1 + 1e-9):
            return True
        used = np.bincount(best, weights=load[rows, best], minlength=k)
        price *= np.exp(step * np.clip(used - 1.0, -1.0, 1.0))
        price *= k / price.sum()
    return False


def _subset_feasible(load: np.ndarray, max_cols: int = 10) -> bool:
    """Hall-type check: UEs usable only within column set S must fit in S."""
    n, k = load.shape
    if k > max_cols:
        return True
    usable = np.isfinite(load)
    masks = (usable * (1 << np.arange(k))).sum(axis=1)
    for s in range(1, 1 << k):
        inside = (masks & ~s) == 0
        if not inside.any():
            continue
        cols = [a for a in range(k) if s >> a & 1]
        need = load[np.ix_(inside, cols)].min(axis=1).sum()
        if need > len(cols) + 1e-12:
            return False
    return True


def _lp_feasible(bw: np.ndarray, cap: np.ndarray) -> bool:
    """Fractional-assignment relaxation; False proves the packing infeasible."""
    n, k = bw.shape
    idx = np.flatnonzero(np.isfinite(bw).ravel())
    rows, cols = np.divmod(idx, k)
    nv = len(idx)
    var = np.arange(nv)
    a_eq = sparse.csr_array((np.ones(nv), (rows, var)), shape=(n, nv))
    a_ub = sparse.csr_array((bw.ravel()[idx] / cap[cols], (cols, var)), shape=(k, nv))
    res = linprog(np.zeros(nv), A_ub=a_ub, b_ub=np.ones(k), A_eq=a_eq, b_eq=np.ones(n),
                  bounds=(0, 1), method="highs")
    return res.status != 2


def _pack_milp(bw, cap, prev, counter) -> np.ndarray | None:
    """Integer assignment by HiGHS, preferring each UE's previous column."""
    n, k = bw.shape
    idx = np.flatnonzero(np.isfinite(bw).ravel())
    rows, cols = np.divmod(idx, k)
    nv = len(idx)
    var = np.arange(nv)
    a_eq = sparse.csr_array((np.ones(nv), (rows, var)), shape=(n, nv))
    a_ub = sparse.csr_array((bw.ravel()[idx] / cap[cols], (cols, var)), shape=(k, nv))
    stay = np.zeros(nv)
    if prev is not None:
        stay = (np.asarray(prev)[rows] != cols).astype(float)
    out = None
    for slack in (0.0, 1e-6):
        res = milp(stay, integrality=np.ones(nv), bounds=Bounds(0, 1),
                   constraints=[LinearConstraint(a_eq, 1, 1),
                                LinearConstraint(a_ub, -np.inf, 1 - slack)])
        if counter is not None:
            counter[0] += int(getattr(res, "mip_node_count", 0) or 0)
        if res.x is None:
            return None
        out = np.full(n, -1, dtype=int)
        chosen = res.x > 0.5
        out[rows[chosen]] = cols[chosen]
        used = np.bincount(out.clip(0), weights=bw[np.arange(n), out.clip(0)], minlength=k)
        # solver tolerances can overfill a column slightly; retry with a margin
        if np.all(out >= 0) and np.all(used <= cap):
            return out
    return None


def pack_config(tables: Tables, options: Sequence[int], prev_oru: Sequence[int] | None,
                counter: list[int] | None = None) -> np.ndarray | None:
    """Pack UEs for a configuration; returns O-RU index per UE or None."""
    active = [j for j, o in enumerate(options) if o]
    if not active:
        return np.zeros(0, dtype=int) if tables.inst.n_ues == 0 else None
    bw = np.stack([tables.column(j, options[j]) for j in active], axis=1)
    cap = tables.cap[active]
    prev_col = None
    if prev_oru is not None:
        col_of = {j: c for c, j in enumerate(active)}
        prev_col = [col_of.get(p, -1) for p in prev_oru]
    sol = pack(bw, cap, prev_col, counter)
    if sol is None:
        return None
    return np.asarray(active, dtype=int)[sol]


def prev_indices(inst: ProblemInstance, prev: Allocation | Mapping[int, int] | None):
    """Previous O-RU index per UE position (-1 when unknown)."""
    if prev is None:
        return None
    assoc = prev.assoc_x if isinstance(prev, Allocation) else prev
    pos = {r: j for j, r in enumerate(inst.oru_ids)}
    return [pos.get(assoc.get(u, -1), -1) for u in inst.ue_ids]


def allocation_from(inst: ProblemInstance, options: Sequence[int], oru_index: np.ndarray) -> Allocation:
    assoc = {u: inst.oru_ids[int(j)] for u, j in zip(inst.ue_ids, oru_index)}
    powers = {inst.oru_ids[j]: inst.power_levels[j][o - 1] for j, o in enumerate(options) if o}
    return build_allocation(inst, assoc, powers)


# ---------------------------------------------------------------------------
# branch and bound

def _lower_bound(tables: Tables, options: tuple[int, ...], fixed_cost: float) -> float | None:
    """Cost lower bound for completions of ``options`` (a prefix), None if hopeless.

    Two relaxations, the larger wins: a count bound (extra O-RUs needed at
    their best capacity, priced at their cheapest level) and a unit-cost
    bound (load not absorbed by already-paid O-RUs, priced at the cheapest
    watts per unit of load among undecided O-RUs).
    """
    inst = tables.inst
    m = inst.n_orus
    d = len(options)
    if inst.n_ues == 0:
        return fixed_cost
    fixed = None
    n_fixed = 0
    for j, o in enumerate(options):
        if o:
            col = tables.column(j, o) / tables.cap[j]
            fixed = col if fixed is None else np.minimum(fixed, col)
            n_fixed += 1
    rest = tables.suffix_load[:, d]
    min_load = rest if fixed is None else np.minimum(fixed, rest)
    if not np.all(np.isfinite(min_load)):
        return None
    extra_needed = min_load.sum() - n_fixed
    if extra_needed <= 1e-12:
        count_lb = fixed_cost
    else:
        k = math.ceil(extra_needed - 1e-9)
        if k > m - d:
            return None
        count_lb = fixed_cost + sum(tables.suffix_costs[d][:k]) * (1 - 1e-12)
    if d == m:
        return count_lb

    unit = tables.suffix_unit[:, d]
    if fixed is None:
        return max(count_lb, fixed_cost + float(unit.sum()) * (1 - 1e-9))
    # fractional knapsack: paid capacity n_fixed absorbs the UEs with the best
    # unit cost saved per unit of fixed load
    must = ~np.isfinite(unit)
    room = n_fixed - fixed[must].sum()
    if room < -1e-9:
        return None
    free = ~must & np.isfinite(fixed)
    value = unit[free]
    weight = fixed[free]
    total = float(unit[~must].sum())
    saved = 0.0
    if room > 0 and value.size:
        zero = weight <= 0
        saved += float(value[zero].sum())
        value, weight = value[~zero], weight[~zero]
        order = np.argsort(-value / weight, kind="stable")
        cum = np.cumsum(weight[order])
        whole = int(np.searchsorted(cum, room, side="right"))
        saved += float(value[order[:whole]].sum())
        if whole < order.size:
            left = room - (cum[whole - 1] if whole else 0.0)
            saved += float(value[order[whole]]) * left / float(weight[order[whole]])
    unit_lb = fixed_cost + max(0.0, total - saved) * (1 - 1e-9)
    return max(count_lb, unit_lb)


def solve_exact(inst: ProblemInstance, prev: Allocation | Mapping[int, int] | None = None,
                threads: int = 1) -> SolveReport:
    """Provably optimal allocation under the discretized power grid.

    ``prev`` only steers the association inside the optimal configuration
    towards the previous serving O-RUs. ``threads`` > 1 evaluates batches of
    tied candidate configurations concurrently; the result does not depend
    on it.
    """
    t0 = time.perf_counter()
    tables = Tables(inst)
    prev_oru = prev_indices(inst, prev)
    sym = symmetry_classes(inst, prev_oru)
    m = inst.n_orus
    counter = [0]
    seq = itertools.count()
    root_lb = _lower_bound(tables, (), 0.0)
    heap: list = []
    if root_lb is not None:
        heap.append((root_lb, 0, next(seq), (), 0.0))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while heap:
            item = heapq.heappop(heap)
            counter[0] += 1
            if item[1] == 1:
                batch = [item]
                while pool is not None and heap and heap[0][1] == 1 and len(batch) < threads:
                    batch.append(heapq.heappop(heap))
                    counter[0] += 1
                if pool is None:
                    results = [pack_config(tables, item[3], prev_oru)]
                else:
                    results = list(pool.map(
                        lambda it: pack_config(tables, it[3], prev_oru), batch))
                for pos, (it, sol) in enumerate(zip(batch, results)):
                    if sol is not None:
                        # count as if the batch had been evaluated sequentially
                        nodes = counter[0] - (len(batch) - pos - 1)
                        alloc = allocation_from(inst, it[4], sol)
                        return SolveReport(alloc, nodes, time.perf_counter() - t0,
                                           Optimality.PROVED_OPTIMAL)
                continue
            _, _, _, options, fixed = item
            d = len(options)
            if d == m:
                key = config_key(inst, options, prev_oru)
                heapq.heappush(heap, (key[0], 1, key, options, options))
                continue
            limit = len(inst.power_levels[d])
            if sym[d] >= 0:
                limit = min(limit, options[sym[d]])
            for o in range(limit + 1):
                cost = fixed + (tables.cost[d][o - 1] if o else 0.0)
                child = options + (o,)
                lb = _lower_bound(tables, child, cost)
                if lb is not None:
                    heapq.heappush(heap, (lb, 0, next(seq), child, cost))
    finally:
        if pool is not None:
            pool.shutdown()
    raise Infeasible("no association meets every demand even with all O-RUs at maximum power")
