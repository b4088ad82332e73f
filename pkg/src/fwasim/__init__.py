"""Closed-loop sliced radio-resource and renewable-energy simulator for
O-RAN-based 5G fixed wireless access."""

__version__ = "0.1.0"

from .engine import RunReport, Simulation, run_simulation
from .scenario import ScenarioSpec, build_spec, load_scenario

__all__ = [
    "RunReport",
    "ScenarioSpec",
    "Simulation",
    "build_spec",
    "load_scenario",
    "run_simulation",
    "__version__",
]
