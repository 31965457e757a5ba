"""Simulated hybrid facility and the co-simulation driver."""

from .driver import RunReport, run_scenario
from .facility import FacilitySim, Ledger, SimAdapters, SimEvents
from .scenario import JobWave, ProviderSpec, SimScenario, load_scenario, parse_scenario

__all__ = [
    "FacilitySim",
    "JobWave",
    "Ledger",
    "ProviderSpec",
    "RunReport",
    "SimAdapters",
    "SimEvents",
    "SimScenario",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
]
