"""Controllability toolkit for the bilinear Schrodinger equation on (0, 1).

Modules: spectral_core (eigenbasis, dipoles), simulator (propagation),
expansion (power series in the control), quadratic_forms, moment_solver,
control_synthesis, min_time, cli.
"""

from . import (control_synthesis, expansion, min_time, moment_solver, oscillatory,
               quadratic_forms, simulator, spectral_core)
from .simulator import Control, SpectralState, Trajectory, propagate, propagate_gauge
from .spectral_core import DipoleModel, preset

__all__ = ["control_synthesis", "expansion", "min_time", "moment_solver", "oscillatory",
           "quadratic_forms", "simulator", "spectral_core", "Control", "SpectralState",
           "Trajectory", "propagate", "propagate_gauge", "DipoleModel", "preset"]
__version__ = "0.1.0"
