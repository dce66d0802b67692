"""Heat-conduction topology optimization with multigrid-assisted reanalysis."""

from mgar_topopt.model import ThermalModel, build_model, heat_load
from mgar_topopt.config import ParsedConfig, parse_config
from mgar_topopt.optimizer import run

__all__ = [
    "ThermalModel",
    "ParsedConfig",
    "build_model",
    "heat_load",
    "parse_config",
    "run",
]

__version__ = "0.1.0"
