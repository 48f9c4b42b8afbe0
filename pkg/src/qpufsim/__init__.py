"""Density-matrix simulation of quantum physical unclonable functions."""

from .qpuf import QpufInstance, Response, evaluate, qeval, qgen
from .metrics import MetricsReport
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = ["QpufInstance", "Response", "evaluate", "qeval", "qgen", "MetricsReport", "ExperimentConfig", "run_experiment"]
