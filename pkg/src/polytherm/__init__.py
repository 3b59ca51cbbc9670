"""Variational time stepping for adiabatic polyconvex thermoelasticity on a periodic grid."""

from .grid import GridSpec
from .constitutive import PaperEnergy, QuadraticEnergy
from .varstep import State, StepConfig, StepReport, solve_step
from .march import Trajectory, run

__all__ = [
    "GridSpec",
    "PaperEnergy",
    "QuadraticEnergy",
    "State",
    "StepConfig",
    "StepReport",
    "solve_step",
    "Trajectory",
    "run",
]

__version__ = "0.1.0"
