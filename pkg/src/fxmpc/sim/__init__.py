"""Closed-loop simulation: scenario configuration, harness and experiments."""

from .config import Reference, ScenarioConfig, load_config, save_config
from .harness import LOG_COLUMNS, MpcController, SimLog, read_log, run_closed_loop, write_log

__all__ = [
    "LOG_COLUMNS",
    "MpcController",
    "Reference",
    "ScenarioConfig",
    "SimLog",
    "load_config",
    "read_log",
    "run_closed_loop",
    "save_config",
    "write_log",
]
