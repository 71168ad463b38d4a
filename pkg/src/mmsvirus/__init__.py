"""MMS phone-virus epidemics on OS-fragmented call graphs."""

__version__ = "0.1.0"

from .callgraph import CallGraph, DegreeModel, assign_os, generate_graph, neighborhood_subgraph, read_graph, write_graph
from .detection import ThresholdProfile, VolumeHistory, compute_threshold, detect, synthesize_history
from .epidemic import EpidemicTrace, HandsetStates, SimParams, analytic_si_curve, run_naive, select_target, step
from .experiments import Scenario, SweepResult, builtin_scenarios, emit, run_scenario
from .percolation import ComponentReport, components, giant_fraction_curve, scan_augmented_components, susceptible_subgraph
from .temporal import TemporalParams, VolumeProfile, make_synthetic_profile, per_step_attack_probability, run_temporal

__all__ = [
    "CallGraph", "DegreeModel", "assign_os", "generate_graph", "neighborhood_subgraph", "read_graph", "write_graph",
    "ThresholdProfile", "VolumeHistory", "compute_threshold", "detect", "synthesize_history",
    "EpidemicTrace", "HandsetStates", "SimParams", "analytic_si_curve", "run_naive", "select_target", "step",
    "Scenario", "SweepResult", "builtin_scenarios", "emit", "run_scenario",
    "ComponentReport", "components", "giant_fraction_curve", "scan_augmented_components", "susceptible_subgraph",
    "TemporalParams", "VolumeProfile", "make_synthetic_profile", "per_step_attack_probability", "run_temporal",
]
