"""Energy, handover and loop-delay accounting, and report files."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .control_plane import LoopTrace, e2e_delay

VOICE_HANDOVER_BUDGET_S = 27.5e-3


class UndefinedMetricError(ValueError):
    pass


class ReportError(OSError):
    pass


@dataclass(frozen=True)
class EnergyEpoch:
    n_ues: int
    total_watts: float
    active_e2n_count: int
    n_e2n: int
    baseline_allon_watts: float

    @property
    def per_ue_watts(self) -> float:
        return self.total_watts / max(1, self.n_ues)


@dataclass
class EnergyAccount:
    epochs: list[EnergyEpoch] = field(default_factory=list)

    def add(self, epoch: EnergyEpoch) -> None:
        self.epochs.append(epoch)

    @property
    def baseline_allon_watts(self) -> list[float]:
        return [e.baseline_allon_watts for e in self.epochs]


def savings_vs_allon(account: EnergyAccount, epoch: int) -> float:
    """Fraction of the all-on draw saved at ``epoch``."""
    e = account.epochs[epoch]
    if e.baseline_allon_watts <= 0:
        raise UndefinedMetricError("all-on baseline must be > 0")
    return min(1.0, max(0.0, 1.0 - e.total_watts / e.baseline_allon_watts))


def per_ue_energy(total: float, n_ues: int) -> float:
    if n_ues <= 0:
        raise UndefinedMetricError("per-UE energy is undefined without UEs")
    return total / n_ues


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    n_ues: int
    status: str
    triggered: bool
    handovers: int
    handover_total_s: float
    e2e_total_s: float
    breakdown: dict[str, float]
    stages: list[tuple[str, str, float, float]]
    solver_wall_s: float | None
    solver_nodes: int | None

    @property
    def handover_per_ue_s(self) -> float:
        return self.handover_total_s / self.handovers if self.handovers else 0.0


@dataclass
class RunSummary:
    solver: str
    energy: EnergyAccount = field(default_factory=EnergyAccount)
    records: list[EpochRecord] = field(default_factory=list)

    def add(self, trace: LoopTrace, n_e2n: int) -> None:
        self.energy.add(EnergyEpoch(trace.n_ues, trace.energy_after, trace.active_after, n_e2n,
                                    trace.allon_watts))
        total, breakdown = e2e_delay(trace)
        self.records.append(EpochRecord(
            epoch=trace.epoch, n_ues=trace.n_ues, status=trace.status,
            triggered=trace.triggered, handovers=trace.handover_count,
            handover_total_s=trace.handover_total, e2e_total_s=total,
            breakdown={str(c): v for c, v in breakdown.items()},
            stages=[(s.stage, str(s.component), s.start, s.end) for s in trace.stages],
            solver_wall_s=trace.solver_wall_time, solver_nodes=trace.solver_nodes))

    def __len__(self) -> int:
        return len(self.records)


def _f(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(summary: RunSummary, out_dir: str | Path) -> list[Path]:
    """Write the run's CSV series, JSON summary and per-figure data files.

    Every file except ``footprint.csv`` (real solver wall times) is a pure
    function of the run inputs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return _emit(summary, out)
    except OSError as e:
        raise ReportError(f"{getattr(e, 'filename', None) or out}: {e.strerror or e}") from e


def _emit(summary: RunSummary, out: Path) -> list[Path]:
    acct = summary.energy
    paths = []

    p = out / "epochs.csv"
    rows = []
    for i, (e, r) in enumerate(zip(acct.epochs, summary.records)):
        rows.append([r.epoch, e.n_ues, e.active_e2n_count, _f(e.total_watts),
                     _f(e.per_ue_watts), _f(e.baseline_allon_watts),
                     _f(savings_vs_allon(acct, i)), r.handovers, _f(r.handover_total_s),
                     _f(r.handover_per_ue_s), _f(r.e2e_total_s), int(r.triggered), r.status])
    _write_csv(p, ["epoch", "n_ues", "active_e2n", "total_watts", "per_ue_watts",
                   "baseline_allon_watts", "savings", "handovers", "handover_total_s",
                   "handover_per_ue_s", "e2e_total_s", "triggered", "status"], rows)
    paths.append(p)

    p = out / "fig_energy.csv"
    _write_csv(p, ["n_ues", "total_watts", "per_ue_watts", "active_e2n", "inactive_e2n"],
               [[e.n_ues, _f(e.total_watts), _f(e.per_ue_watts), e.active_e2n_count,
                 e.n_e2n - e.active_e2n_count] for e in acct.epochs])
    paths.append(p)

    p = out / "fig_handover.csv"
    _write_csv(p, ["epoch", "n_ues", "handovers", "total_s", "per_ue_s", "within_voice_budget"],
               [[r.epoch, r.n_ues, r.handovers, _f(r.handover_total_s), _f(r.handover_per_ue_s),
                 int(r.handover_per_ue_s < VOICE_HANDOVER_BUDGET_S)] for r in summary.records])
    paths.append(p)

    p = out / "fig_e2e_stages.csv"
    rows = []
    for r in summary.records:
        for stage, comp, start, end in r.stages:
            rows.append([r.epoch, r.n_ues, stage, comp, _f(start), _f(end), _f(end - start)])
    _write_csv(p, ["epoch", "n_ues", "stage", "component", "start_s", "end_s", "duration_s"], rows)
    paths.append(p)

    p = out / "summary.json"
    doc = {
        "solver": summary.solver,
        "epochs": len(summary.records),
        "energy_watts": [e.total_watts for e in acct.epochs],
        "per_ue_watts": [e.per_ue_watts for e in acct.epochs],
        "active_e2n": [e.active_e2n_count for e in acct.epochs],
        "baseline_allon_watts": acct.baseline_allon_watts,
        "savings_vs_allon": [savings_vs_allon(acct, i) for i in range(len(acct.epochs))],
        "handovers": [r.handovers for r in summary.records],
        "handover_total_s": [r.handover_total_s for r in summary.records],
        "handover_per_ue_s": [r.handover_per_ue_s for r in summary.records],
        "handover_within_voice_budget": all(r.handover_per_ue_s < VOICE_HANDOVER_BUDGET_S
                                            for r in summary.records),
        "e2e_total_s": [r.e2e_total_s for r in summary.records],
        "e2e_breakdown_s": [r.breakdown for r in summary.records],
        "status": [r.status for r in summary.records],
    }
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths.append(p)

    p = out / "footprint.csv"
    _write_csv(p, ["epoch", "n_ues", "solver", "wall_time_s", "nodes_explored"],
               [[r.epoch, r.n_ues, summary.solver,
                 "" if r.solver_wall_s is None else _f(r.solver_wall_s),
                 "" if r.solver_nodes is None else r.solver_nodes] for r in summary.records])
    paths.append(p)
    return paths


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
