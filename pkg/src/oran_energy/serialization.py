"""Text formats: TOML for scenarios, instances and allocations, JSON lines for traces."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import tomli
import tomli_w

from .config import ConfigError, ScenarioConfig
from .optimizer import Allocation, ProblemInstance, StructuralError, build_allocation
from .rf_env import (InvalidModelError, InvalidScenarioError, OruSite, Position3D, Scenario,
                     UeTerminal)

FORMAT_VERSION = 1


class ParseError(ValueError):
    """A file could not be read as the expected document."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _g12(x: float) -> float:
    return float("%.12g" % x)


def _parse(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as e:
        raise ParseError(path, f"malformed TOML: {e}") from None
    except OSError as e:
        raise ParseError(path, e.strerror or str(e)) from None


def _read_toml(path: str | Path) -> dict[str, Any]:
    doc = _parse(path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(path, f"unsupported format_version {version!r}")
    return doc


def _write_toml(doc: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(tomli_w.dumps(doc), encoding="utf-8")


# ---------------------------------------------------------------- scenario

def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "scenario",
        "config": sc.config.to_dict(),
        "oru": [{"id": o.id, "position": [o.position.x, o.position.y, o.position.z],
                 "antenna_gain_gt": o.antenna_gain_gt, "max_power_gamma": o.max_power_gamma,
                 "max_bandwidth_rho": o.max_bandwidth_rho,
                 "static_power_theta": o.static_power_theta,
                 "amp_efficiency_eta": o.amp_efficiency_eta,
                 "carrier_freq_ft": o.carrier_freq_ft, "numerology_nt": o.numerology_nt}
                for o in sc.orus],
        "ue": [{"id": u.id, "position": [u.position.x, u.position.y, u.position.z],
                "rx_gain_gr": u.rx_gain_gr, "demand_lambda": u.demand_lambda} for u in sc.ues],
        "shadow_db": [[float(v) for v in row] for row in sc.shadow_db],
    }


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    cfg = ScenarioConfig.from_dict(doc["config"]).validate()
    orus = tuple(OruSite(**{**o, "position": Position3D(*o["position"])}) for o in doc["oru"])
    ues = tuple(UeTerminal(**{**u, "position": Position3D(*u["position"])}) for u in doc["ue"])
    shadow = np.array(doc["shadow_db"], dtype=float).reshape(len(ues), len(orus))
    return Scenario(config=cfg, orus=orus, ues=ues, shadow_db=shadow)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    _write_toml(scenario_to_dict(sc), path)


def load_scenario(path: str | Path) -> Scenario:
    doc = _read_toml(path)
    if doc.get("kind") != "scenario":
        raise ParseError(path, "not a scenario file")
    try:
        return scenario_from_dict(doc)
    except (KeyError, TypeError, ValueError, ConfigError, InvalidScenarioError,
            InvalidModelError) as e:
        raise ParseError(path, f"invalid scenario: {e}") from None


def load_config(path: str | Path) -> ScenarioConfig:
    """A bare configuration file: the ScenarioConfig fields at top level."""
    doc = _parse(path)
    doc.pop("format_version", None)
    return ScenarioConfig.from_dict(doc)


# ---------------------------------------------------------------- instance and allocation

def instance_to_dict(inst: ProblemInstance) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "instance",
        "noise_sigma2": _g12(inst.noise_sigma2),
        "epsilon": _g12(inst.epsilon),
        "ue": [{"id": u, "demand_lambda": _g12(d)} for u, d in zip(inst.ue_ids, inst.demand)],
        "oru": [{"id": r, "max_power_gamma": _g12(inst.max_power[j]),
                 "max_bandwidth_rho": _g12(inst.max_bandwidth[j]),
                 "static_power_theta": _g12(inst.static_power[j]),
                 "amp_efficiency_eta": _g12(inst.efficiency[j]),
                 "power_levels": [_g12(p) for p in inst.power_levels[j]]}
                for j, r in enumerate(inst.oru_ids)],
        "gain_beta": [[_g12(g) for g in row] for row in inst.gain],
    }


def instance_from_dict(doc: dict[str, Any]) -> ProblemInstance:
    ues, orus = doc["ue"], doc["oru"]
    gain = np.array(doc["gain_beta"], dtype=float)
    if not ues:
        gain = gain.reshape(0, len(orus))
    return ProblemInstance(
        ue_ids=tuple(u["id"] for u in ues),
        demand=np.array([u["demand_lambda"] for u in ues], dtype=float),
        oru_ids=tuple(o["id"] for o in orus),
        max_power=np.array([o["max_power_gamma"] for o in orus], dtype=float),
        max_bandwidth=np.array([o["max_bandwidth_rho"] for o in orus], dtype=float),
        static_power=np.array([o["static_power_theta"] for o in orus], dtype=float),
        efficiency=np.array([o["amp_efficiency_eta"] for o in orus], dtype=float),
        gain=gain, noise_sigma2=float(doc["noise_sigma2"]), epsilon=float(doc["epsilon"]),
        power_levels=tuple(tuple(o["power_levels"]) for o in orus))


def save_instance(inst: ProblemInstance, path: str | Path) -> None:
    _write_toml(instance_to_dict(inst), path)


def load_instance(path: str | Path) -> ProblemInstance:
    doc = _read_toml(path)
    if doc.get("kind") != "instance":
        raise ParseError(path, "not an instance file")
    try:
        return instance_from_dict(doc)
    except (KeyError, TypeError, ValueError, StructuralError) as e:
        raise ParseError(path, f"invalid instance: {e}") from None


def allocation_to_dict(alloc: Allocation) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "allocation",
        "objective_watts": _g12(alloc.objective_watts),
        "active": sorted(alloc.active_z),
        "power": [{"oru": r, "watts": _g12(w)} for r, w in sorted(alloc.power_w.items())],
        "assoc": [{"ue": u, "oru": r, "bandwidth_hz": _g12(alloc.bandwidth_y.get((u, r), 0.0))}
                  for u, r in sorted(alloc.assoc_x.items())],
    }


def allocation_from_dict(doc: dict[str, Any]) -> Allocation:
    return Allocation(
        assoc_x={a["ue"]: a["oru"] for a in doc["assoc"]},
        bandwidth_y={(a["ue"], a["oru"]): float(a["bandwidth_hz"]) for a in doc["assoc"]},
        power_w={p["oru"]: float(p["watts"]) for p in doc["power"]},
        active_z=frozenset(doc["active"]),
        objective_watts=float(doc["objective_watts"]))


def save_allocation(alloc: Allocation, path: str | Path) -> None:
    _write_toml(allocation_to_dict(alloc), path)


def load_allocation(path: str | Path) -> Allocation:
    doc = _read_toml(path)
    if doc.get("kind") != "allocation":
        raise ParseError(path, "not an allocation file")
    try:
        return allocation_from_dict(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(path, f"invalid allocation: {e}") from None


def load_problem(path: str | Path) -> ProblemInstance:
    """Instance from an instance file, or from a scenario file's first population."""
    doc = _read_toml(path)
    if doc.get("kind") == "scenario":
        from .optimizer import instance_from_scenario
        sc = load_scenario(path)
        return instance_from_scenario(sc, ue_ids=[u.id for u in sc.ues][:sc.config.ue_schedule[0]])
    return load_instance(path)


def rebuild_allocation(inst: ProblemInstance, alloc: Allocation) -> Allocation:
    """Recompute bandwidths and objective at full precision for ``inst``."""
    return build_allocation(inst, alloc.assoc_x, {r: alloc.power_w[r] for r in alloc.active_z})


# ---------------------------------------------------------------- JSON lines

def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
