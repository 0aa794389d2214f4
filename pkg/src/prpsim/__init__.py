"""Desk-scale simulator for redundant Wi-Fi links with duplicate-and-discard delivery."""

__version__ = "0.1.0"

from .core import MS, NS, S, US, Simulator, parse_duration  # noqa: E402
from .scenario import Scenario, load_config, scenario_from_dict  # noqa: E402

__all__ = ["MS", "NS", "S", "US", "Simulator", "parse_duration", "Scenario", "load_config", "scenario_from_dict"]
