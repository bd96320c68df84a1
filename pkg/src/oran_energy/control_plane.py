"""Closed-loop control simulation: monitoring, optimization, A1 policy, handover, switch-off.

The simulated clock is driven only by the latency model, so traces are
deterministic; the solver's real wall time is recorded next to it.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .optimizer import (Allocation, Infeasible, ProblemInstance, SolveReport, all_on_objective,
                        build_allocation, check_feasible, objective, solve)


class ControlPlaneError(Exception):
    pass


class RejectedPlanError(ControlPlaneError):
    """The target allocation cannot be turned into a safe handover plan."""


class IncompleteTraceError(ControlPlaneError):
    pass


class NodeState(str, enum.Enum):
    ACTIVE = "Active"
    STANDBY = "Standby"


@dataclass(frozen=True, order=True)
class ComponentId:
    kind: str
    node: int | None = None

    def __str__(self) -> str:
        return self.kind if self.node is None else f"{self.kind}({self.node})"


RF_ENV = ComponentId("RfEnvManager")
E2_NODES = ComponentId("E2Node")          # all nodes as one pipeline stage
XAPP_MONITORING = ComponentId("XAppMonitoring")
MONITORING_STORE = ComponentId("MonitoringStore")
VESPA = ComponentId("VespaAgent")
VES_COLLECTOR = ComponentId("VesCollector")
DATA_RIVER = ComponentId("DataRiver")
RAPP = ComponentId("RAppEnergySavings")
A1_MEDIATOR = ComponentId("A1Mediator")
XAPP_HANDOVER = ComponentId("XAppHandover")


def e2_node(node_id: int) -> ComponentId:
    return ComponentId("E2Node", node_id)


# ---------------------------------------------------------------- latency model

@dataclass(frozen=True)
class StageLaw:
    """Stage time as a power law through calibration knots.

    Between consecutive knots the law is ``c * n**k`` with (c, k) fixed by the
    two knots, so every knot is reproduced exactly. Outside the knot range the
    nearest segment is extended. A single knot needs an explicit ``exponent``.
    ``rel_sd`` is the relative standard deviation used when jitter is on.
    """
    knots: tuple[tuple[float, float], ...]
    exponent: float | None = None
    rel_sd: float = 0.0

    def __post_init__(self):
        if not self.knots:
            raise ValueError("at least one calibration knot is required")
        xs = [n for n, _ in self.knots]
        if any(n <= 0 for n in xs) or xs != sorted(set(xs)):
            raise ValueError("knot sizes must be positive and strictly increasing")
        if any(t < 0 for _, t in self.knots):
            raise ValueError("knot times must be >= 0")
        if len(self.knots) == 1 and self.exponent is None:
            raise ValueError("a single knot needs an exponent")
        if self.exponent is not None and self.exponent < 0:
            raise ValueError("exponent must be >= 0")
        for (_, a), (_, b) in zip(self.knots, self.knots[1:]):
            if (a == 0) != (b == 0) or b < a:
                raise ValueError("knot times must be non-decreasing and all zero or all positive")

    def segments(self) -> list[tuple[float, float]]:
        """(c, k) of each segment, in knot order."""
        if len(self.knots) == 1:
            n0, t0 = self.knots[0]
            return [(t0 / n0 ** self.exponent, self.exponent)]
        out = []
        for (n0, t0), (n1, t1) in zip(self.knots, self.knots[1:]):
            if t0 == 0:
                out.append((0.0, 0.0))
                continue
            k = math.log(t1 / t0) / math.log(n1 / n0)
            out.append((t0 / n0 ** k, k))
        return out

    def __call__(self, n: float) -> float:
        if n <= 0:
            return 0.0
        for kn, kt in self.knots:
            if n == kn:
                return float(kt)
        segs = self.segments()
        i = 0
        while i < len(segs) - 1 and n > self.knots[i + 1][0]:
            i += 1
        c, k = segs[i]
        return c * n ** k


def fit_power_law(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares (c, k) of t = c * n**k in log-log space."""
    x = np.log([n for n, _ in points])
    y = np.log([t for _, t in points])
    k, logc = np.polyfit(x, y, 1)
    return float(math.exp(logc)), float(k)


STAGES = ("rf_env_connection", "e2_connection", "xapp_monitoring", "monitoring_store",
          "vespa", "ves_collector", "data_river", "rapp_solve", "a1_policy",
          "xapp_handover", "rf_env_handover", "e2n_handover", "power_reconfiguration")

STAGE_COMPONENT = {
    "rf_env_connection": RF_ENV,
    "e2_connection": E2_NODES,
    "xapp_monitoring": XAPP_MONITORING,
    "monitoring_store": MONITORING_STORE,
    "vespa": VESPA,
    "ves_collector": VES_COLLECTOR,
    "data_river": DATA_RIVER,
    "rapp_solve": RAPP,
    "a1_policy": A1_MEDIATOR,
    "xapp_handover": XAPP_HANDOVER,
    "rf_env_handover": RF_ENV,
    "e2n_handover": E2_NODES,
    "power_reconfiguration": E2_NODES,
}

# scrape time 0.064 s at 4 UEs and 0.112 s at 256 UEs
_MONITORING_EXPONENT = math.log(0.112 / 0.064) / math.log(256 / 4)


def _default_laws() -> dict[str, StageLaw]:
    return {
        "rf_env_connection": StageLaw(((16, 3e-4), (1024, 0.035)), rel_sd=1e-5 / 3e-4),
        "e2_connection": StageLaw(((16, 3e-4), (1024, 0.035)), rel_sd=1e-5 / 3e-4),
        "xapp_monitoring": StageLaw(((16, 1.55e-4),), exponent=_MONITORING_EXPONENT,
                                    rel_sd=1.67e-4 / 1.55e-4),
        "monitoring_store": StageLaw(((16, 1.83), (1024, 215.246)), rel_sd=0.2 / 1.83),
        "vespa": StageLaw(((16, 4.332), (256, 168.0), (1024, 672.0)), rel_sd=0.3 / 4.332),
        "ves_collector": StageLaw(((16, 1.324148), (1024, 155.747)), rel_sd=0.05 / 1.324148),
        "data_river": StageLaw(((16, 0.722), (1024, 84.922)), rel_sd=0.1 / 0.722),
        "rapp_solve": StageLaw(((16, 1.12632), (256, 73.0), (1024, 310.292)),
                               rel_sd=0.39 / 1.12632),
        "rf_env_handover": StageLaw(((16, 0.05), (1024, 5.881)), rel_sd=0.005 / 0.05),
        "e2n_handover": StageLaw(((16, 0.018), (1024, 2.117)), rel_sd=0.002 / 0.018),
    }


@dataclass(frozen=True)
class LatencyModel:
    """Per-stage laws (stages without a law take 0 s) and the per-handover time."""
    laws: Mapping[str, StageLaw] = field(default_factory=_default_laws)
    t_ho: float = 2.02e-3
    handover_overhead: float = 0.0
    handover_rel_sd: float = 0.010 / 0.032

    def __post_init__(self):
        if self.t_ho < 0 or self.handover_overhead < 0:
            raise ValueError("handover times must be >= 0")
        unknown = set(self.laws) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stage(s): {', '.join(sorted(unknown))}")

    def law(self, stage: str) -> StageLaw | None:
        return self.laws.get(stage)


def stage_time(component: ComponentId | str, n_ues: float, latency: LatencyModel) -> float:
    """Modeled duration of a stage (by name or component) for ``n_ues`` UEs."""
    if n_ues < 0:
        raise ValueError("n_ues must be >= 0")
    if isinstance(component, ComponentId):
        names = [s for s in STAGES if STAGE_COMPONENT[s] == component]
        # a component owning several stages is timed by its first modeled one
        stage = next((s for s in names if s in latency.laws), None)
    else:
        stage = component
    law = latency.law(stage) if stage else None
    return law(n_ues) if law is not None else 0.0


# ---------------------------------------------------------------- messages and plans

class PolicyType(str, enum.Enum):
    ENERGY_SAVING = "EnergySaving"


@dataclass(frozen=True)
class A1Policy:
    policy_id: int
    policy_type: PolicyType
    target_states: Mapping[int, NodeState]
    power_levels: Mapping[int, float]
    target_assoc: Mapping[int, int]
    validity: float

    def validate(self, epsilon: float) -> None:
        for node, st in self.target_states.items():
            if st is NodeState.ACTIVE and self.power_levels.get(node, 0.0) < epsilon * (1 - 1e-9):
                raise RejectedPlanError(f"active node {node} has power below epsilon")
        for ue, node in self.target_assoc.items():
            if self.target_states.get(node) is not NodeState.ACTIVE:
                raise RejectedPlanError(f"UE {ue} targets non-active node {node}")

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "policy_type": self.policy_type.value,
            "target_states": {str(k): v.value for k, v in sorted(self.target_states.items())},
            "power_levels": {str(k): v for k, v in sorted(self.power_levels.items())},
            "target_assoc": {str(k): v for k, v in sorted(self.target_assoc.items())},
            "validity": self.validity,
        }


class MessageKind(str, enum.Enum):
    KPM_REPORT = "KpmReport"
    RC_HANDOVER_COMMAND = "RcHandoverCommand"
    RC_STATE_CHANGE = "RcStateChange"
    HANDOVER_COMPLETE = "HandoverComplete"


@dataclass(frozen=True)
class E2Message:
    kind: MessageKind
    source: ComponentId
    dest: ComponentId
    payload: tuple
    time: float

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind.value, "source": str(self.source),
                "dest": str(self.dest), "payload": list(self.payload)}


@dataclass(frozen=True)
class HandoverPlan:
    moves: tuple[tuple[int, int, int], ...]     # (ue, source node, target node)
    deactivations: tuple[int, ...]
    activations: tuple[int, ...] = ()

    def __post_init__(self):
        ues = [m[0] for m in self.moves]
        if len(ues) != len(set(ues)):
            raise RejectedPlanError("a UE appears twice in the plan")
        off = set(self.deactivations)
        if any(t in off for _, _, t in self.moves):
            raise RejectedPlanError("a move targets a node being deactivated")

    def to_dict(self) -> dict:
        return {"moves": [list(m) for m in self.moves],
                "deactivations": list(self.deactivations),
                "activations": list(self.activations)}


def plan_handovers(prev: Allocation, nxt: Allocation,
                   instance: ProblemInstance | None = None) -> HandoverPlan:
    """Moves for every UE whose node changes, then switch-offs of vacated nodes.

    Moves out of nodes that will be switched off come first, ordered by node
    then UE id; the remaining moves follow in UE order.
    """
    if set(prev.assoc_x) != set(nxt.assoc_x):
        raise RejectedPlanError("allocations cover different UE sets")
    if instance is not None:
        bad = check_feasible(instance, nxt)
        if bad:
            raise RejectedPlanError(f"target allocation violates {bad[0].constraint_id.value}")
    for u, r in nxt.assoc_x.items():
        if r not in nxt.active_z:
            raise RejectedPlanError(f"UE {u} targets inactive node {r}")
    deact = tuple(sorted(prev.active_z - nxt.active_z))
    act = tuple(sorted(nxt.active_z - prev.active_z))
    off = set(deact)
    moves = [(u, prev.assoc_x[u], nxt.assoc_x[u]) for u in sorted(prev.assoc_x)
             if prev.assoc_x[u] != nxt.assoc_x[u]]
    moves.sort(key=lambda m: (m[1] not in off, m[1] if m[1] in off else 0, m[0]))
    return HandoverPlan(tuple(moves), deact, act)


def handover_delay(plan: HandoverPlan, latency: LatencyModel) -> tuple[float, float]:
    """(total, per-UE) time of the xApp handover sequence."""
    if not plan.moves:
        return 0.0, 0.0
    n = len(plan.moves)
    total = n * latency.t_ho + latency.handover_overhead
    return total, total / n


# ---------------------------------------------------------------- state and trace

@dataclass(frozen=True)
class RanState:
    """Attachments, node states and powers between epochs."""
    assoc: Mapping[int, int]
    node_state: Mapping[int, NodeState]
    power: Mapping[int, float]
    demand: Mapping[int, float]
    clock: float = 0.0
    epoch: int = 0
    next_policy_id: int = 1
    optimized: bool = True      # False until the loop's own rApp has run

    @property
    def active(self) -> frozenset[int]:
        return frozenset(r for r, s in self.node_state.items() if s is NodeState.ACTIVE)

    def allocation(self, inst: ProblemInstance) -> Allocation:
        return build_allocation(inst, self.assoc, {r: self.power[r] for r in self.active})

    def check(self) -> None:
        for u, r in self.assoc.items():
            if self.node_state.get(r) is not NodeState.ACTIVE:
                raise ControlPlaneError(f"UE {u} attached to non-active node {r}")


def state_from_allocation(inst: ProblemInstance, alloc: Allocation, clock: float = 0.0,
                          epoch: int = 0) -> RanState:
    return RanState(
        assoc=dict(alloc.assoc_x),
        node_state={r: NodeState.ACTIVE if r in alloc.active_z else NodeState.STANDBY
                    for r in inst.oru_ids},
        power={r: float(alloc.power_w.get(r, 0.0)) for r in inst.oru_ids},
        demand={u: float(d) for u, d in zip(inst.ue_ids, inst.demand)},
        clock=clock, epoch=epoch)


def bootstrap_state(inst: ProblemInstance, solver: str = "exact", threads: int = 1) -> RanState:
    """Steady state for the initial population: one solve, no simulated time.

    The loop still runs its own optimization in the first epoch.
    """
    st = state_from_allocation(inst, solve(inst, solver, threads=threads).allocation)
    return replace(st, optimized=False)


@dataclass(frozen=True)
class StageRecord:
    stage: str
    component: ComponentId
    start: float
    end: float
    n: int          # UEs (or moves for handover stages) the stage was timed for

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class LoopTrace:
    epoch: int
    n_ues: int
    stages: tuple[StageRecord, ...]
    events: tuple[E2Message, ...]
    triggered: bool
    status: str                     # "ok", "idle" or "infeasible"
    handover_count: int
    handover_total: float
    energy_before: float
    energy_after: float
    allon_watts: float
    active_after: int
    start_assoc: Mapping[int, int]
    start_states: Mapping[int, NodeState]
    plan: HandoverPlan | None = None
    policy: A1Policy | None = None
    solver_wall_time: float | None = None
    solver_nodes: int | None = None


def e2e_delay(trace: LoopTrace) -> tuple[float, dict[ComponentId, float]]:
    """Loop delay and its split by component."""
    if not trace.stages:
        raise IncompleteTraceError(f"epoch {trace.epoch} has no stages")
    for a, b in zip(trace.stages, trace.stages[1:]):
        if b.start < a.end:
            raise IncompleteTraceError("stages overlap")
    total = trace.stages[-1].end - trace.stages[0].start
    parts: dict[ComponentId, list[float]] = {}
    for s in trace.stages:
        parts.setdefault(s.component, []).append(s.duration)
    breakdown = {c: math.fsum(v) for c, v in sorted(parts.items())}
    return total, breakdown


def verify_trace(trace: LoopTrace) -> None:
    """Replay the events; raise if a UE is ever on a Standby node or a node
    is switched off before all of its handovers completed."""
    assoc = dict(trace.start_assoc)
    states = dict(trace.start_states)

    def safe():
        for u, r in assoc.items():
            if states.get(r) is not NodeState.ACTIVE:
                raise ControlPlaneError(f"UE {u} on {states.get(r)} node {r} "
                                        f"in epoch {trace.epoch}")

    safe()
    pending: dict[int, int] = {}
    if trace.plan is not None:
        for _, src, _ in trace.plan.moves:
            pending[src] = pending.get(src, 0) + 1
    last = -math.inf
    for ev in trace.events:
        if ev.time < last:
            raise ControlPlaneError("events out of time order")
        last = ev.time
        if ev.kind is MessageKind.HANDOVER_COMPLETE:
            ue, src, dst = ev.payload
            assoc[ue] = dst
            pending[src] -= 1
        elif ev.kind is MessageKind.RC_STATE_CHANGE:
            node, st, _ = ev.payload
            st = NodeState(st)
            if st is NodeState.STANDBY and pending.get(node, 0):
                raise ControlPlaneError(f"node {node} switched off with "
                                        f"{pending[node]} handovers outstanding")
            states[node] = st
        safe()


# ---------------------------------------------------------------- the loop

@dataclass
class _Clock:
    now: float
    latency: LatencyModel
    rng: np.random.Generator | None
    stages: list = field(default_factory=list)

    def duration(self, stage: str, n: float) -> float:
        law = self.latency.law(stage)
        t = law(n) if law is not None else 0.0
        if self.rng is not None and law is not None and t > 0:
            t = max(0.0, t * (1.0 + law.rel_sd * self.rng.standard_normal()))
        return t

    def run(self, stage: str, n: int, duration: float | None = None) -> tuple[float, float]:
        d = self.duration(stage, n) if duration is None else duration
        start = self.now
        self.now = start + d
        self.stages.append(StageRecord(stage, STAGE_COMPONENT[stage], start, self.now, n))
        return start, self.now


def attach_new_ues(state: RanState, inst: ProblemInstance) -> RanState:
    """Drop departed UEs; attach arrivals to the active node with the best RSRP."""
    pos = {u: i for i, u in enumerate(inst.ue_ids)}
    active = sorted(state.active)
    if not active:
        raise ControlPlaneError("no active node to attach to")
    cols = [inst.oru_index(r) for r in active]
    assoc = {u: r for u, r in state.assoc.items() if u in pos}
    for u in inst.ue_ids:
        if u not in assoc:
            i = pos[u]
            rsrp = [inst.gain[i, j] * state.power[r] for j, r in zip(cols, active)]
            assoc[u] = active[int(np.argmax(rsrp))]
    demand = {u: float(inst.demand[pos[u]]) for u in inst.ue_ids}
    return replace(state, assoc=assoc, demand=demand)


def needs_optimization(state: RanState, inst: ProblemInstance, threshold: float = 0.0) -> bool:
    """Re-optimize when the UE set changed or total demand moved past ``threshold``."""
    if not state.optimized:
        return True
    if set(state.demand) != set(inst.ue_ids):
        return True
    before = math.fsum(state.demand.values())
    return abs(float(inst.demand.sum()) - before) > threshold


def run_epoch(state: RanState, inst: ProblemInstance, latency: LatencyModel,
              solver: str = "exact", *, threads: int = 1, threshold: float = 0.0,
              rng: np.random.Generator | None = None, sharded_monitoring: bool = False,
              policy_validity: float = 3600.0) -> tuple[RanState, LoopTrace]:
    """One pass of the 14-step loop for the UE population in ``inst``.

    On an infeasible solve the epoch aborts: the returned state is ``state``
    unchanged and the trace ends at the solver stage with status
    ``"infeasible"``.
    """
    triggered = needs_optimization(state, inst, threshold)
    cur = attach_new_ues(state, inst)
    n = inst.n_ues
    allon = all_on_objective(inst)
    energy_before = objective(inst, cur.allocation(inst))
    clock = _Clock(state.clock, latency, rng)
    events: list[E2Message] = []

    # 01-04: connections and KPM collection
    clock.run("rf_env_connection", n)
    clock.run("e2_connection", n)
    if sharded_monitoring:
        loads = _attached_counts(cur)
        d = max((clock.duration("xapp_monitoring", k) for k in loads.values()), default=0.0)
        clock.run("xapp_monitoring", n, d)
    else:
        clock.run("xapp_monitoring", n)
    kpm_at = clock.now
    for r, k in sorted(_attached_counts(cur).items()):
        events.append(E2Message(MessageKind.KPM_REPORT, e2_node(r), XAPP_MONITORING,
                                (r, k), kpm_at))
    clock.run("monitoring_store", n)
    # 05-06: O1 export and dispatch
    clock.run("vespa", n)
    clock.run("ves_collector", n)
    clock.run("data_river", n)

    common = dict(epoch=cur.epoch, n_ues=n, start_assoc=dict(cur.assoc),
                  start_states=dict(cur.node_state), allon_watts=allon)
    if not triggered:
        final = replace(cur, clock=clock.now, epoch=cur.epoch + 1)
        return final, LoopTrace(stages=tuple(clock.stages), events=tuple(events),
                                triggered=False, status="idle", handover_count=0,
                                handover_total=0.0, energy_before=energy_before,
                                energy_after=energy_before, active_after=len(cur.active),
                                **common)

    # 07: rApp solve
    t0 = time.perf_counter()
    try:
        report: SolveReport = solve(inst, solver, prev=cur.assoc, threads=threads)
    except Infeasible:
        wall = time.perf_counter() - t0
        clock.run("rapp_solve", n)
        return state, LoopTrace(stages=tuple(clock.stages), events=tuple(events),
                                triggered=True, status="infeasible", handover_count=0,
                                handover_total=0.0, energy_before=energy_before,
                                energy_after=energy_before, active_after=len(cur.active),
                                solver_wall_time=wall, **common)
    wall = time.perf_counter() - t0
    clock.run("rapp_solve", n)
    alloc = report.allocation

    # 08-09: policy and power-up of nodes that join
    prev_alloc = cur.allocation(inst)
    plan = plan_handovers(prev_alloc, alloc, inst)
    policy = A1Policy(
        policy_id=cur.next_policy_id, policy_type=PolicyType.ENERGY_SAVING,
        target_states={r: NodeState.ACTIVE if r in alloc.active_z else NodeState.STANDBY
                       for r in inst.oru_ids},
        power_levels={r: alloc.power_w[r] for r in sorted(alloc.active_z)},
        target_assoc=dict(alloc.assoc_x), validity=policy_validity)
    policy.validate(inst.epsilon)
    _, t = clock.run("a1_policy", n)
    node_state = dict(cur.node_state)
    power = dict(cur.power)
    for r in plan.activations:
        node_state[r] = NodeState.ACTIVE
        power[r] = alloc.power_w[r]
        events.append(E2Message(MessageKind.RC_STATE_CHANGE, XAPP_HANDOVER, e2_node(r),
                                (r, NodeState.ACTIVE.value, power[r]), t))

    # 10-13: handovers
    total_ho, _ = handover_delay(plan, latency)
    if rng is not None and total_ho > 0:
        total_ho = max(0.0, total_ho * (1.0 + latency.handover_rel_sd * rng.standard_normal()))
    start, _ = clock.run("xapp_handover", len(plan.moves), total_ho)
    step = total_ho / len(plan.moves) if plan.moves else 0.0
    for k, (u, src, dst) in enumerate(plan.moves):
        events.append(E2Message(MessageKind.RC_HANDOVER_COMMAND, XAPP_HANDOVER, e2_node(src),
                                (u, src, dst), start + k * step))
        events.append(E2Message(MessageKind.HANDOVER_COMPLETE, e2_node(dst), XAPP_HANDOVER,
                                (u, src, dst), start + (k + 1) * step))
    clock.run("rf_env_handover", len(plan.moves))
    clock.run("e2n_handover", len(plan.moves))

    # 14: switch-off and power changes, only after every handover completed
    _, t = clock.run("power_reconfiguration", n)
    for r in plan.deactivations:
        node_state[r] = NodeState.STANDBY
        power[r] = 0.0
        events.append(E2Message(MessageKind.RC_STATE_CHANGE, XAPP_HANDOVER, e2_node(r),
                                (r, NodeState.STANDBY.value, 0.0), t))
    for r in sorted(alloc.active_z - set(plan.activations)):
        if power[r] != alloc.power_w[r]:
            power[r] = alloc.power_w[r]
            events.append(E2Message(MessageKind.RC_STATE_CHANGE, XAPP_HANDOVER, e2_node(r),
                                    (r, NodeState.ACTIVE.value, power[r]), t))
    events.sort(key=lambda e: e.time)

    final = RanState(assoc=dict(alloc.assoc_x), node_state=node_state, power=power,
                     demand=dict(cur.demand), clock=clock.now, epoch=cur.epoch + 1,
                     next_policy_id=cur.next_policy_id + 1)
    final.check()
    return final, LoopTrace(stages=tuple(clock.stages), events=tuple(events), triggered=True,
                            status="ok", handover_count=len(plan.moves),
                            handover_total=total_ho, energy_before=energy_before,
                            energy_after=alloc.objective_watts, active_after=alloc.active_count,
                            plan=plan, policy=policy, solver_wall_time=wall,
                            solver_nodes=report.nodes_explored, **common)


def _attached_counts(state: RanState) -> dict[int, int]:
    counts = {r: 0 for r in state.active}
    for r in state.assoc.values():
        counts[r] = counts.get(r, 0) + 1
    return counts


def trace_records(trace: LoopTrace) -> list[dict]:
    """Line records for a trace: one per stage, then one per event."""
    out = [{"epoch": trace.epoch, "record": "stage", "stage": s.stage,
            "component": str(s.component), "start": s.start, "end": s.end,
            "n_ues": trace.n_ues, "n": s.n} for s in trace.stages]
    out.extend({"epoch": trace.epoch, "record": "event", **e.to_dict()} for e in trace.events)
    out.append({"epoch": trace.epoch, "record": "summary", "status": trace.status,
                "triggered": trace.triggered, "handover_count": trace.handover_count,
                "handover_total": trace.handover_total, "energy_before": trace.energy_before,
                "energy_after": trace.energy_after, "active_after": trace.active_after,
                "policy": trace.policy.to_dict() if trace.policy else None,
                "plan": trace.plan.to_dict() if trace.plan else None})
    return out


def _allon_state(inst: ProblemInstance) -> RanState:
    st = RanState(assoc={}, node_state={r: NodeState.ACTIVE for r in inst.oru_ids},
                  power={r: float(g) for r, g in zip(inst.oru_ids, inst.max_power)}, demand={},
                  optimized=False)
    return attach_new_ues(st, inst)


def epoch_sizes(schedule: Sequence[int], epochs: int | None) -> list[int]:
    """UE count per epoch; the last schedule entry repeats when epochs exceed it."""
    n = len(schedule) if epochs is None else epochs
    return [schedule[min(e, len(schedule) - 1)] for e in range(n)]


def simulate(scenario, schedule: Sequence[int] | None = None, epochs: int | None = None,
             solver: str | None = None, latency: LatencyModel | None = None, threads: int = 1,
             jitter: bool | None = None, seed: int | None = None) -> list[LoopTrace]:
    """Run the loop over a UE-count schedule; epoch ``e`` serves UEs ``0..n_e-1``.

    The network starts in the optimized state for the first population (all
    nodes on at full power if that population is infeasible), so an epoch
    whose demand matches the previous one triggers no handovers.
    """
    from .optimizer import instance_from_scenario

    cfg = scenario.config
    schedule = tuple(schedule or cfg.ue_schedule)
    if epochs is None:
        epochs = max(cfg.epochs, len(schedule))
    solver = solver or cfg.solver
    latency = latency or LatencyModel(t_ho=cfg.handover_time_s)
    jitter = cfg.jitter if jitter is None else jitter
    rng = np.random.default_rng([cfg.seed if seed is None else seed, 1]) if jitter else None
    if max(schedule) > len(scenario.ues):
        raise ControlPlaneError(f"schedule needs {max(schedule)} UEs, scenario has "
                                f"{len(scenario.ues)}")
    ids = [ue.id for ue in scenario.ues]

    first = instance_from_scenario(scenario, ue_ids=ids[:schedule[0]])
    try:
        state = bootstrap_state(first, solver, threads)
    except Infeasible:
        state = _allon_state(first)
    traces = []
    for n in epoch_sizes(schedule, epochs):
        inst = instance_from_scenario(scenario, ue_ids=ids[:n])
        state, trace = run_epoch(state, inst, latency, solver, threads=threads,
                                 threshold=cfg.demand_threshold_bps, rng=rng,
                                 sharded_monitoring=cfg.monitoring_sharded)
        traces.append(trace)
    return traces
