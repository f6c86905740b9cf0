"""Robust RL for relay selection and power allocation in two-hop
decode-and-forward relay networks, plus numerical verifiers for the
total-variation-distance bounds behind the worst-case guarantee."""

from .config import ScenarioConfig, load_scenario, save_scenario
from .runtime import ScenarioRuntime, build_runtime

__all__ = ["ScenarioConfig", "ScenarioRuntime", "build_runtime",
           "load_scenario", "save_scenario"]

__version__ = "0.1.0"
