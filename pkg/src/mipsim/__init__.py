"""Discrete-event simulator for Mobile IP route optimization in hierarchical networks."""

from .agents import World
from .engine import SimParams, run
from .harness import ScenarioConfig, builtin_scenario, improvement, run_scenario
from .topology import HierAddress, Strategy, load_topology, parse_address, shortest_path, strategy_route

__all__ = [
    "World", "SimParams", "run", "ScenarioConfig", "builtin_scenario", "improvement",
    "run_scenario", "HierAddress", "Strategy", "load_topology", "parse_address",
    "shortest_path", "strategy_route",
]
__version__ = "0.1.0"
