"""Experiment grids, aggregation and plotting behind the ``graphband`` CLI."""
from .config import Cell, ConfigError, EnvironmentSpec, ExperimentConfig, cells
from .report import aggregate, plot
from .runner import run_matrix

__all__ = ["Cell", "ConfigError", "EnvironmentSpec", "ExperimentConfig", "aggregate", "cells", "plot",
           "run_matrix"]
