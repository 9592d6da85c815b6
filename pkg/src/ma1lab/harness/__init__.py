"""Config-driven experiments and the command line interface."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import ExperimentResult, diagnose, run_experiment
