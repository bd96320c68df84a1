"""Scenario configuration and named profiles."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

SOLVERS = ("exact", "greedy", "brute")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Geometry:
    field_length: float = 105.0
    field_width: float = 68.0
    stand_min: float = 5.0       # grandstand band, distance from the perimeter
    stand_max: float = 47.0
    slope_deg: float = 25.0
    step_height: float = 2.0
    antenna_height: float = 10.0
    ue_height: float = 1.5


@dataclass(frozen=True)
class RadioConfig:
    carrier_freq_hz: float = 7.125e9
    n_channels: int = 6
    bandwidth_hz: float = 100e6
    antenna_gain_db: float = 8.0
    ue_gain_db: float = 2.0
    max_power_w: float = 1.0
    numerology: int = 4
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0
    env_loss_factor: float = 1.0
    shadowing_sigma: float = 7.9
    thermal_noise_dbm_hz: float = -174.0
    noise_figure_db: float = 7.0
    static_power_w: float = 11.4757
    amp_efficiency: float = 0.25

    @property
    def noise_sigma2(self) -> float:
        dbm = self.thermal_noise_dbm_hz + 10 * math.log10(self.bandwidth_hz) + self.noise_figure_db
        return 10 ** ((dbm - 30) / 10)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: Geometry = field(default_factory=Geometry)
    radio: RadioConfig = field(default_factory=RadioConfig)
    n_orus: int = 6
    ue_schedule: tuple[int, ...] = (64,)
    demand_bps: float = 20e6
    demand_spread: float = 0.0     # per-UE demand drawn in demand*(1 +/- spread)
    channel_mode: str = "geometric"  # or "uniform": every link has uniform_gain_db
    uniform_gain_db: float = -100.0
    # Transmit power grid as fractions of max power; 0 stands for epsilon.
    power_fractions: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    epsilon_w: float = 1e-3
    solver: str = "exact"
    seed: int = 42
    epochs: int = 1
    jitter: bool = False
    handover_time_s: float = 2.02e-3
    demand_threshold_bps: float = 0.0
    monitoring_sharded: bool = False

    @property
    def n_ues(self) -> int:
        return max(self.ue_schedule) if self.ue_schedule else 0

    def channel_model(self):
        from .rf_env import ChannelModel
        r = self.radio
        return ChannelModel(path_loss_exponent=r.path_loss_exponent,
                            reference_distance=r.reference_distance,
                            env_loss_factor_gamma=r.env_loss_factor,
                            shadowing_sigma=r.shadowing_sigma,
                            noise_floor_sigma2=r.noise_sigma2)

    def power_levels(self, max_power: float) -> tuple[float, ...]:
        levels = {self.epsilon_w if f == 0 else f * max_power for f in self.power_fractions}
        return tuple(sorted(levels))

    def validate(self) -> "ScenarioConfig":
        if self.n_orus <= 0:
            raise ConfigError("n_orus", "must be > 0")
        if not self.ue_schedule:
            raise ConfigError("ue_schedule", "must be non-empty")
        if any(n <= 0 for n in self.ue_schedule):
            raise ConfigError("ue_schedule", "UE counts must be > 0")
        if self.demand_bps < 0:
            raise ConfigError("demand_bps", "must be >= 0")
        if not 0 <= self.demand_spread <= 1:
            raise ConfigError("demand_spread", "must be in [0, 1]")
        if self.channel_mode not in ("geometric", "uniform"):
            raise ConfigError("channel_mode", "must be 'geometric' or 'uniform'")
        if not self.power_fractions or any(not 0 <= f <= 1 for f in self.power_fractions):
            raise ConfigError("power_fractions", "must be non-empty fractions in [0, 1]")
        if self.epsilon_w <= 0 or self.epsilon_w > self.radio.max_power_w:
            raise ConfigError("epsilon_w", "must be in (0, max_power_w]")
        if self.solver not in SOLVERS:
            raise ConfigError("solver", f"must be one of {', '.join(SOLVERS)}")
        if self.epochs < 0:
            raise ConfigError("epochs", "must be >= 0")
        if self.handover_time_s < 0:
            raise ConfigError("handover_time_s", "must be >= 0")
        geo = self.geometry
        for f in fields(geo):
            if getattr(geo, f.name) <= 0 and f.name != "step_height":
                raise ConfigError(f"geometry.{f.name}", "must be > 0")
        if geo.stand_max <= geo.stand_min:
            raise ConfigError("geometry.stand_max", "must exceed stand_min")
        r = self.radio
        for name in ("carrier_freq_hz", "bandwidth_hz", "max_power_w", "reference_distance",
                     "amp_efficiency", "n_channels"):
            if getattr(r, name) <= 0:
                raise ConfigError(f"radio.{name}", "must be > 0")
        if r.amp_efficiency > 1:
            raise ConfigError("radio.amp_efficiency", "must be <= 1")
        if r.static_power_w < 0 or r.shadowing_sigma < 0:
            raise ConfigError("radio", "static_power_w and shadowing_sigma must be >= 0")
        return self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["ue_schedule"] = list(self.ue_schedule)
        d["power_fractions"] = list(self.power_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        try:
            if "geometry" in d:
                d["geometry"] = Geometry(**d["geometry"])
            if "radio" in d:
                d["radio"] = RadioConfig(**d["radio"])
        except TypeError as e:
            raise ConfigError("geometry/radio", str(e)) from None
        for key in ("ue_schedule", "power_fractions"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def sweep_profile(ues_per_node: float = 62.5) -> ScenarioConfig:
    """Calibrated 16 to 1024 UE sweep over a uniform-coverage stadium.

    17 identical E2 nodes with one power level (1 W) and uniform coverage.
    The per-UE demand is set so a node carries ``ues_per_node`` UEs at full
    bandwidth: the 16-UE point needs one node and the 1024-UE point all 17.
    """
    base = ScenarioConfig()
    snr = 10 ** (base.uniform_gain_db / 10) * base.radio.max_power_w / base.radio.noise_sigma2
    demand = base.radio.bandwidth_hz * math.log2(1 + snr) / ues_per_node
    return replace(base, n_orus=17, channel_mode="uniform", power_fractions=(1.0,),
                   demand_bps=demand, ue_schedule=(16, 64, 128, 256, 512, 1024),
                   epochs=6)


PROFILES = {"default": ScenarioConfig, "sweep": sweep_profile}
