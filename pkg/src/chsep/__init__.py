"""Cahn-Hilliard flows with singular potential and reaction, started near a pure phase."""
from .errors import (
    A4Violated, BoundsBreached, CompatibilityError, ConfigError, DomainError, FitDegenerate,
    GridMismatch, MeanNotZero, NewtonDiverged, NutrientBoundsBreached, ResolutionError,
    SearchFailed, SolverError, UnknownPreset,
)
from .field_ops import Grid, KernelSpec, ScalarField, hminus1_norm, star_norm
from .mean_dynamics import MeanBounds, lower_bound, upper_bound, verify_mean_confinement
from .potential import SingularPotential, check_mz_sharp, sharp_constants
from .reaction import ReactionSpec, eval_S, make_inpainting, make_oono, make_tumor
from .solver import SolverConfig, Trajectory, run, step_local, step_nonlocal
from .tumor import TumorConfig, run_tumor, step_tumor
from .experiments import ExperimentConfig, preset

__version__ = "0.1.0"
