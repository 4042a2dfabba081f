"""Hamster: coded-dispersal synchronous BFT consensus and its simulator."""

from .gf256 import BACKEND
from .harness import RunResult, ScenarioConfig, run_scenario
from .node import HamsterNode

__version__ = "0.1.0"

__all__ = ["BACKEND", "HamsterNode", "RunResult", "ScenarioConfig", "__version__", "run_scenario"]
