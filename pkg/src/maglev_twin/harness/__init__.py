"""Simulation harness: configuration, scenarios, capability maps, service."""

from .capability import capability_map, point_capability, write_capability_csv
from .config import (Config, ConfigError, build_coils, build_context,
                     build_magnets, build_model, build_props,
                     config_from_dict, load_config)
from .scenario import (CSV_COLUMNS, Blackout, HandTargetEvent, ModeEvent,
                       ScenarioError, ScenarioScript, SummaryReport, Waypoint,
                       load_script, run_scenario, script_from_dict,
                       waypoint_trajectory)
from .server import CommandError, SimulationService, create_app, serve

__all__ = [
    "Blackout", "CSV_COLUMNS", "CommandError", "Config", "ConfigError",
    "HandTargetEvent", "ModeEvent", "ScenarioError", "ScenarioScript",
    "SimulationService", "SummaryReport", "Waypoint", "build_coils",
    "build_context", "build_magnets",
    "build_model", "build_props", "capability_map", "config_from_dict",
    "create_app", "load_config", "load_script", "point_capability",
    "run_scenario", "script_from_dict", "serve", "waypoint_trajectory",
    "write_capability_csv",
]
