"""Stadium geometry, radio channel and link-quality metrics.

The channel is a log-distance model anchored at free-space loss at the
reference distance, with a frozen log-normal shadowing sample per
(UE, O-RU) pair. Everything here is a pure function of its inputs, so a
scenario generated from a seed is bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0


class InvalidModelError(ValueError):
    pass


class InvalidScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.z < 0:
            raise InvalidScenarioError(f"position below ground: z={self.z}")

    def distance(self, other: "Position3D") -> float:
        return math.sqrt((self.x - other.x) ** 2 + (self.y - other.y) ** 2
                         + (self.z - other.z) ** 2)


@dataclass(frozen=True)
class OruSite:
    id: int
    position: Position3D
    antenna_gain_gt: float = 8.0          # dB
    max_power_gamma: float = 1.0          # W
    max_bandwidth_rho: float = 100e6      # Hz
    static_power_theta: float = 11.4757   # W
    amp_efficiency_eta: float = 0.25
    carrier_freq_ft: float = 7.125e9      # Hz
    numerology_nt: int = 4                # informational only

    def __post_init__(self):
        if self.max_power_gamma <= 0:
            raise InvalidScenarioError(f"O-RU {self.id}: max_power_gamma must be > 0")
        if self.max_bandwidth_rho <= 0:
            raise InvalidScenarioError(f"O-RU {self.id}: max_bandwidth_rho must be > 0")
        if not 0 < self.amp_efficiency_eta <= 1:
            raise InvalidScenarioError(f"O-RU {self.id}: amp_efficiency_eta must be in (0, 1]")
        if self.static_power_theta < 0:
            raise InvalidScenarioError(f"O-RU {self.id}: static_power_theta must be >= 0")


@dataclass(frozen=True)
class UeTerminal:
    id: int
    position: Position3D
    rx_gain_gr: float = 2.0       # dB
    demand_lambda: float = 0.0    # bit/s

    def __post_init__(self):
        if self.demand_lambda < 0:
            raise InvalidScenarioError(f"UE {self.id}: negative demand")


@dataclass(frozen=True)
class ChannelModel:
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0
    env_loss_factor_gamma: float = 1.0
    shadowing_sigma: float = 7.9
    noise_floor_sigma2: float = 10 ** ((-174 + 80 + 7 - 30) / 10)  # -87 dBm in W

    def __post_init__(self):
        if self.noise_floor_sigma2 <= 0:
            raise InvalidModelError("noise_floor_sigma2 must be > 0")
        if self.shadowing_sigma < 0:
            raise InvalidModelError("shadowing_sigma must be >= 0")
        if self.reference_distance <= 0:
            raise InvalidModelError("reference_distance must be > 0")


@dataclass(frozen=True)
class LinkState:
    gain_beta: float
    rsrp: float      # dBm
    snr: float       # dB
    path_loss: float = field(default=0.0, repr=False)  # dB, kept for recomputation


def free_space_path_loss_db(distance: float, freq: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * distance * freq / SPEED_OF_LIGHT)


def path_loss_db(distance: float, freq: float, model: ChannelModel,
                 shadow_sample: float = 0.0) -> float:
    """Log-distance path loss in dB.

    Distances below the reference distance are clamped to it.
    """
    if freq <= 0:
        raise InvalidModelError("carrier frequency must be > 0")
    d0 = model.reference_distance
    d = max(distance, d0)
    slope = 10.0 * model.path_loss_exponent * model.env_loss_factor_gamma
    return free_space_path_loss_db(d0, freq) + slope * math.log10(d / d0) + shadow_sample


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def channel_gain(ue: UeTerminal, oru: OruSite, model: ChannelModel,
                 shadow_sample: float = 0.0) -> float:
    pl = path_loss_db(ue.position.distance(oru.position), oru.carrier_freq_ft,
                      model, shadow_sample)
    return db_to_linear(oru.antenna_gain_gt + ue.rx_gain_gr - pl)


def snr(gain_beta: float, tx_power_w: float, noise_sigma2: float) -> float:
    """Linear SNR of a link: beta * w / sigma^2."""
    if noise_sigma2 <= 0:
        raise InvalidModelError("noise_sigma2 must be > 0")
    if tx_power_w < 0:
        raise InvalidModelError("tx_power_w must be >= 0")
    return gain_beta * tx_power_w / noise_sigma2


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


def link_state(ue: UeTerminal, oru: OruSite, model: ChannelModel,
               shadow_sample: float, tx_power_w: float) -> LinkState:
    pl = path_loss_db(ue.position.distance(oru.position), oru.carrier_freq_ft,
                      model, shadow_sample)
    beta = db_to_linear(oru.antenna_gain_gt + ue.rx_gain_gr - pl)
    rsrp = watts_to_dbm(tx_power_w) + oru.antenna_gain_gt + ue.rx_gain_gr - pl
    return LinkState(gain_beta=beta, rsrp=rsrp,
                     snr=linear_to_db(snr(beta, tx_power_w, model.noise_floor_sigma2)),
                     path_loss=pl)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    orus: tuple[OruSite, ...]
    ues: tuple[UeTerminal, ...]
    shadow_db: np.ndarray  # (n_ues, n_orus)

    @property
    def model(self) -> ChannelModel:
        return self.config.channel_model()

    def gain_matrix(self, ue_ids=None) -> np.ndarray:
        """Linear gains beta[u, r] for the selected UEs (all by default)."""
        idx = range(len(self.ues)) if ue_ids is None else [self._ue_index(i) for i in ue_ids]
        cfg = self.config
        if cfg.channel_mode == "uniform":
            return np.full((len(idx), len(self.orus)), db_to_linear(cfg.uniform_gain_db))
        model = self.model
        out = np.empty((len(idx), len(self.orus)))
        for row, i in enumerate(idx):
            ue = self.ues[i]
            for j, oru in enumerate(self.orus):
                out[row, j] = channel_gain(ue, oru, model, float(self.shadow_db[i, j]))
        return out

    def _ue_index(self, ue_id: int) -> int:
        # ids are generated as 0..n-1
        if 0 <= ue_id < len(self.ues) and self.ues[ue_id].id == ue_id:
            return ue_id
        for i, ue in enumerate(self.ues):
            if ue.id == ue_id:
                return i
        raise KeyError(ue_id)


def _oru_positions(cfg: ScenarioConfig) -> list[Position3D]:
    geo = cfg.geometry
    n = cfg.n_orus
    near = (n + 1) // 2
    far = n - near
    out = []
    for count, y in ((near, 0.0), (far, geo.field_width)):
        for k in range(count):
            x = geo.field_length * (k + 1) / (count + 1)
            out.append(Position3D(x, y, geo.antenna_height))
    return out


def _stand_elevation(cfg: ScenarioConfig, offset: float) -> float:
    geo = cfg.geometry
    rise = (offset - geo.stand_min) * math.tan(math.radians(geo.slope_deg))
    midway = 0.5 * (geo.stand_min + geo.stand_max)
    if offset >= midway:
        rise += geo.step_height
    return max(rise, 0.0)


def _ue_position(cfg: ScenarioConfig, side_u: float, along_u: float, offset: float) -> Position3D:
    geo = cfg.geometry
    L, W = geo.field_length, geo.field_width
    perimeter = 2 * (L + W)
    s = side_u * perimeter
    z = _stand_elevation(cfg, offset) + geo.ue_height
    if s < L:
        return Position3D(along_u * L, -offset, z)
    if s < 2 * L:
        return Position3D(along_u * L, W + offset, z)
    if s < 2 * L + W:
        return Position3D(-offset, along_u * W, z)
    return Position3D(L + offset, along_u * W, z)


def generate_stadium(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Build O-RU sites, UE terminals and frozen shadowing for one scenario.

    O-RUs sit on both sidelines at antenna height; UEs are spread uniformly
    over the grandstand band around the pitch, whose height follows the
    stand slope plus a step halfway up.
    """
    if config.n_orus <= 0:
        raise InvalidScenarioError("n_orus must be > 0")
    if config.n_ues <= 0:
        raise InvalidScenarioError("n_ues must be > 0")
    config.validate()
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    radio = config.radio

    orus = []
    for i, pos in enumerate(_oru_positions(config)):
        orus.append(OruSite(
            id=i, position=pos, antenna_gain_gt=radio.antenna_gain_db,
            max_power_gamma=radio.max_power_w, max_bandwidth_rho=radio.bandwidth_hz,
            static_power_theta=radio.static_power_w, amp_efficiency_eta=radio.amp_efficiency,
            carrier_freq_ft=radio.carrier_freq_hz + (i % radio.n_channels) * radio.bandwidth_hz,
            numerology_nt=radio.numerology))

    n = config.n_ues
    geo = config.geometry
    side_u = rng.random(n)
    along_u = rng.random(n)
    offset = rng.uniform(geo.stand_min, geo.stand_max, n)
    shadow = rng.normal(0.0, radio.shadowing_sigma, (n, config.n_orus))
    spread = rng.uniform(-1.0, 1.0, n)
    ues = []
    for i in range(n):
        demand = config.demand_bps * (1.0 + config.demand_spread * spread[i])
        ues.append(UeTerminal(
            id=i, position=_ue_position(config, side_u[i], along_u[i], offset[i]),
            rx_gain_gr=radio.ue_gain_db, demand_lambda=float(demand)))
    if radio.shadowing_sigma == 0:
        shadow = np.zeros_like(shadow)
    return Scenario(config=config, orus=tuple(orus), ues=tuple(ues), shadow_db=shadow)
