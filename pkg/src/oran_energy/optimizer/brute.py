"""Exhaustive oracle for small instances."""
from __future__ import annotations

import itertools
import time
from typing import Mapping

import numpy as np

from .model import (TOL, Allocation, Infeasible, OracleTooLarge, Optimality, ProblemInstance,
                    SolveReport, build_allocation, min_bandwidth)

MAX_ORUS = 4
MAX_UES = 8
MAX_LEVELS = 3


def _key(inst: ProblemInstance, options, prev_idx) -> tuple:
    # same total order as the exact solver, computed independently
    forced = int(sum(1 for j in prev_idx if j >= 0 and options[j] == 0))
    total = 0.0
    power = 0.0
    active = []
    for j, o in enumerate(options):
        if o:
            p = inst.power_levels[j][o - 1]
            total += p / inst.efficiency[j] + inst.static_power[j]
            power += p
            active.append(inst.oru_ids[j])
    return (total, len(active), forced, tuple(active), power, tuple(-o for o in options))


def solve_bruteforce(inst: ProblemInstance, prev: Allocation | Mapping[int, int] | None = None
                     ) -> SolveReport:
    """Enumerate every activation, power level and association.

    Configurations are ranked by objective, active count, UEs forced to move
    (their previous O-RU is off), active ids and total power. Inside the
    winning configuration the association with the fewest moves relative to
    ``prev`` wins, then the lexicographically smallest one.
    """
    n, m = inst.n_ues, inst.n_orus
    if m > MAX_ORUS or n > MAX_UES or any(len(lv) > MAX_LEVELS for lv in inst.power_levels):
        raise OracleTooLarge(f"oracle limited to {MAX_ORUS} O-RUs, {MAX_UES} UEs, "
                             f"{MAX_LEVELS} power levels")
    t0 = time.perf_counter()
    assocs = np.array(list(itertools.product(range(m), repeat=n)), dtype=int).reshape(-1, n)
    if prev is not None:
        prev_map = prev.assoc_x if isinstance(prev, Allocation) else prev
        pos = {r: j for j, r in enumerate(inst.oru_ids)}
        prev_idx = np.array([pos.get(prev_map.get(u, -1), -1) for u in inst.ue_ids], dtype=int)
        moves = (assocs != prev_idx).sum(axis=1)
    else:
        prev_idx = np.full(n, -1, dtype=int)
        moves = np.zeros(len(assocs), dtype=int)

    best = None
    explored = 0
    for options in itertools.product(*[range(len(lv) + 1) for lv in inst.power_levels]):
        explored += len(assocs)
        key = _key(inst, options, prev_idx)
        if best is not None and key >= best[0]:
            continue
        # bandwidth of UE i on O-RU j under this configuration (inf if inactive)
        need = np.full((n, m), np.inf)
        for j, o in enumerate(options):
            if not o:
                continue
            p = inst.power_levels[j][o - 1]
            for i in range(n):
                s = inst.gain[i, j] * p / inst.noise_sigma2
                need[i, j] = min_bandwidth(float(inst.demand[i]), s)
        y = need[np.arange(n), assocs] if n else np.zeros((len(assocs), 0))
        ok = np.all(np.isfinite(y), axis=1)
        for j in range(m):
            used = np.where(assocs == j, y, 0.0).sum(axis=1)
            ok &= used <= inst.max_bandwidth[j] * (1 + TOL)
        if not ok.any():
            continue
        cand = np.flatnonzero(ok)
        cols = [assocs[cand, i] for i in reversed(range(n))]
        order = np.lexsort(cols + [moves[cand]]) if n else np.arange(len(cand))
        best = (key, options, assocs[cand[order[0]]])

    if best is None:
        raise Infeasible("no combination satisfies every constraint")
    _, options, assoc = best
    alloc = build_allocation(
        inst, {u: inst.oru_ids[int(j)] for u, j in zip(inst.ue_ids, assoc)},
        {inst.oru_ids[j]: inst.power_levels[j][o - 1] for j, o in enumerate(options) if o})
    return SolveReport(alloc, explored, time.perf_counter() - t0, Optimality.PROVED_OPTIMAL)
