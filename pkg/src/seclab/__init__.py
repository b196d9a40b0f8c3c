"""Numerical verification of a smoothed sectorial corner model.

Subpackages build the corner smoother, the sector model and its profile
function, the deformation flow, almost complex structures and Floer jet
checks.  :mod:`seclab.suites` bundles them into graded sweeps and
:mod:`seclab.cli` drives those sweeps from a JSON config.
"""
from .numerics import (ConstructionError, DegeneracyError, DomainError, EscapeError, RegionError,
                       SecLabError)
from .sector import ConfigError, SectorModel, default_model, load_model, model_from_dict, preset

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConstructionError", "DegeneracyError", "DomainError", "EscapeError", "RegionError",
    "SecLabError", "SectorModel", "default_model", "load_model", "model_from_dict", "preset",
]
