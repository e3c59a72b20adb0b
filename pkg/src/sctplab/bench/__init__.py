"""Benchmark harness: scenario configs, runners, metrics, CSV, figures."""

from .config import ConfigError, ScenarioConfig, build_config
from .metrics import MetricsReport, emit_csv
from .scenarios import run_scenario

__all__ = ["ConfigError", "ScenarioConfig", "build_config", "MetricsReport",
           "emit_csv", "run_scenario"]
