"""Monte Carlo simulation and analysis of photonic entanglement swapping over a free-space link."""

from .config import ConfigError, ExperimentConfig, default_config
from .kernels import BACKEND
from .pipeline import ResultsReport, analyze, run, sweep

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "ConfigError", "default_config", "run", "analyze", "sweep", "ResultsReport", "BACKEND"]
