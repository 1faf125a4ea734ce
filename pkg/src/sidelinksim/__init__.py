"""Slot-level NR sidelink Mode-2 simulator: SPS, one-shot and early-breakout one-shot."""

from .analytic import BreakoutModel, breakout_time_stats, expected_shorter_run, min_counter_mean
from .config import SimConfig, load_config
from .engine import SimulationReport, Simulator, run
from .errors import ConfigError, SimulationError
from .oneshot import Scheme
from .phy import Outcome, PhyConfig
from .scenario import ScenarioConfig
from .sps import Resource, SpsConfig

__all__ = [
    "BreakoutModel", "ConfigError", "Outcome", "PhyConfig", "Resource", "ScenarioConfig",
    "Scheme", "SimConfig", "SimulationError", "SimulationReport", "Simulator", "SpsConfig",
    "breakout_time_stats", "expected_shorter_run", "load_config", "min_counter_mean", "run",
]
