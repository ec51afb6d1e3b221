"""Discrete-event simulator of AQMs on a two-block programmable switch."""
from .model import AqmSettings, ScenarioConfig, preset_scenario, PRESET_NAMES
from .simulation import RunResult, Simulation, run_scenario

__version__ = "0.1.0"

__all__ = ["AqmSettings", "ScenarioConfig", "preset_scenario", "PRESET_NAMES",
           "RunResult", "Simulation", "run_scenario"]
