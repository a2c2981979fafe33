"""Experiment configs, the driver catalog, sweeps and the command line."""

from .catalog import CATALOG, DriverSpec, catalog_listing
from .config import ExperimentConfig, load_config, parse_config
from .runner import ExperimentResult, run_experiment, write_reports

__all__ = ["CATALOG", "DriverSpec", "ExperimentConfig", "ExperimentResult", "catalog_listing", "load_config",
           "parse_config", "run_experiment", "write_reports"]
