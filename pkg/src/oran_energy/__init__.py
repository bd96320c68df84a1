"""Energy-aware load balancing for O-RAN: channel model, optimizer, control-loop simulator."""
from .config import PROFILES, ConfigError, ScenarioConfig, sweep_profile
from .control_plane import LatencyModel, simulate
from .rf_env import generate_stadium

__version__ = "0.1.0"

__all__ = ["PROFILES", "ConfigError", "LatencyModel", "ScenarioConfig", "generate_stadium",
           "sweep_profile", "simulate", "__version__"]
