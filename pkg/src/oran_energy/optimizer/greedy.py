"""Greedy fallback for instances too large for the exact search."""
from __future__ import annotations

import time
from typing import Mapping

import numpy as np

from .exact import Tables, allocation_from, pack
from .model import Allocation, Infeasible, Optimality, ProblemInstance, SolveReport


def _lowest_levels(tables: Tables, assign: np.ndarray, options: list[int]) -> list[int]:
    inst = tables.inst
    out = list(options)
    for j in range(inst.n_orus):
        members = assign == j
        if not members.any():
            out[j] = 0
            continue
        for o in range(1, len(inst.power_levels[j]) + 1):
            if tables.column(j, o)[members].sum() <= tables.cap[j]:
                out[j] = o
                break
    return out


def solve_greedy(inst: ProblemInstance, prev: Allocation | Mapping[int, int] | None = None
                 ) -> SolveReport:
    """Largest demand first; fill the best-SNR active O-RU, open a new one when none fits.

    Capacity during assignment is judged at each O-RU's top power level; power
    is lowered to the smallest sufficient level afterwards and empty O-RUs
    are switched off. If the pass strands a UE, the all-on configuration is
    packed instead, so the heuristic fails only when the instance is
    infeasible. ``prev`` is accepted for interface parity and ignored.
    """
    t0 = time.perf_counter()
    tables = Tables(inst)
    n, m = inst.n_ues, inst.n_orus
    top = [len(lv) for lv in inst.power_levels]
    residual = tables.cap.astype(float).copy()
    active = np.zeros(m, dtype=bool)
    assign = np.full(n, -1, dtype=int)
    top_power = np.array([lv[-1] for lv in inst.power_levels])
    order = sorted(range(n), key=lambda i: (-inst.demand[i], inst.ue_ids[i]))
    nodes = 0
    stranded = False
    for i in order:
        nodes += 1
        need = np.array([tables.column(j, top[j])[i] for j in range(m)])
        snr_rank = np.lexsort((np.arange(m), -inst.gain[i] * top_power))
        choice = next((j for j in snr_rank if active[j] and need[j] <= residual[j]), None)
        if choice is None:
            choice = next((j for j in snr_rank if not active[j] and need[j] <= residual[j]), None)
            if choice is None:
                stranded = True
                break
            active[choice] = True
        assign[i] = choice
        residual[choice] -= need[choice]

    if stranded:
        bw = np.stack([tables.column(j, top[j]) for j in range(m)], axis=1)
        sol = pack(bw, tables.cap)
        if sol is None:
            raise Infeasible("no association meets every demand even with all O-RUs "
                             "at maximum power")
        assign = sol
    options = _lowest_levels(tables, assign, top)
    alloc = allocation_from(inst, options, assign)
    return SolveReport(alloc, nodes, time.perf_counter() - t0, Optimality.HEURISTIC)
