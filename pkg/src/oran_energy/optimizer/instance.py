from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import ProblemInstance


def instance_from_scenario(scenario, ue_ids: Sequence[int] | None = None,
                           demand: Sequence[float] | None = None) -> ProblemInstance:
    """Problem instance for a subset of the scenario's UEs (all by default)."""
    cfg = scenario.config
    if ue_ids is None:
        ue_ids = [ue.id for ue in scenario.ues]
    ue_ids = sorted(ue_ids)
    by_id = {ue.id: ue for ue in scenario.ues}
    if demand is None:
        demand = [by_id[u].demand_lambda for u in ue_ids]
    orus = scenario.orus
    return ProblemInstance(
        ue_ids=tuple(ue_ids),
        demand=np.asarray(demand, dtype=float),
        oru_ids=tuple(o.id for o in orus),
        max_power=np.array([o.max_power_gamma for o in orus]),
        max_bandwidth=np.array([o.max_bandwidth_rho for o in orus]),
        static_power=np.array([o.static_power_theta for o in orus]),
        efficiency=np.array([o.amp_efficiency_eta for o in orus]),
        gain=scenario.gain_matrix(ue_ids),
        noise_sigma2=cfg.radio.noise_sigma2,
        epsilon=cfg.epsilon_w,
        power_levels=tuple(cfg.power_levels(o.max_power_gamma) for o in orus),
    )
