"""Matching-game relay selection for multi-UAV networks."""

from .baselines import OracleResult, best_response, brute_force_optimum, random_assignment
from .dynamics import (
    DynamicMatchResult,
    DynamicState,
    PerturbationEvent,
    Trajectory,
    apply_perturbation,
    dynamic_match,
    rematch_incremental,
)
from .matching import (
    Matching,
    MatchingClass,
    global_satisfaction,
    match_class1,
    match_class2,
    match_class3,
    verify_stability,
)
from .model import Drone, LinkModel, Role, link_rate_bps, path_loss_db, relay_rate_bps, satisfaction
from .multilevel import LevelGraph, MultilevelResult, Route, multilevel_match
from .preferences import Market, PreferenceList, build_market, build_relay_prefs, build_source_prefs
from .scenario import Scenario, load_scenario, realize_market
from .experiment import MetricsRecord, RunResult, SweepRow, run_experiment, sweep

__all__ = [
    "Drone", "LinkModel", "Role", "path_loss_db", "link_rate_bps", "relay_rate_bps",
    "satisfaction", "Market", "PreferenceList", "build_market", "build_source_prefs",
    "build_relay_prefs", "Matching", "MatchingClass", "match_class1", "match_class2",
    "match_class3", "verify_stability", "global_satisfaction", "LevelGraph", "Route",
    "MultilevelResult", "multilevel_match", "Trajectory", "PerturbationEvent",
    "DynamicState", "DynamicMatchResult", "apply_perturbation", "rematch_incremental",
    "dynamic_match", "OracleResult", "brute_force_optimum", "best_response",
    "random_assignment", "Scenario", "load_scenario", "realize_market",
    "MetricsRecord", "RunResult", "SweepRow", "run_experiment", "sweep",
]

__version__ = "0.1.0"
