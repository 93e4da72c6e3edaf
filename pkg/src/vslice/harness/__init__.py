"""Experiment CLI, configuration and output emission."""
from .cli import main
from .config import ConfigError, ExperimentConfig, load_config
from .outputs import emit_outputs

__all__ = ["main", "ConfigError", "ExperimentConfig", "load_config", "emit_outputs"]
