"""Spherical-harmonic stochastic generator for climate ensembles."""

from ._accel import backend
from .diagnostics import compute_diagnostics
from .errors import InputError, NumericalError
from .generator import FitConfig, GeneratorBundle, aggregate, fit_full, generate
from .grid_core import (EnsembleField, ForcingSeries, GridSpec, LandMask, read_field,
                        read_forcing, read_mask, write_field)
from .persistence import load_bundle, param_count, save_bundle
from .sht import forward_sht, inverse_sht, max_bandlimit

__version__ = "0.1.0"

__all__ = [
    "EnsembleField", "FitConfig", "ForcingSeries", "GeneratorBundle", "GridSpec", "InputError",
    "LandMask", "NumericalError", "aggregate", "backend", "compute_diagnostics", "fit_full",
    "forward_sht", "generate", "inverse_sht", "load_bundle", "max_bandlimit", "param_count",
    "read_field", "read_forcing", "read_mask", "save_bundle", "write_field",
]
