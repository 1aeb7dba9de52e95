"""Complex-scaling perfectly matched layers for the stationary Schroedinger equation
on a quasi-periodic half-strip: modes, FEM discretization, direct solve, reference
solutions, radiation diagnostics and convergence experiments."""

from .config import (ProblemConfig, build_field, build_system, canonical_config, load_config,
                     log_decay_config, power_decay_config, save_config, validate_config)
from .errors import (DomainError, IllConditionedBasisError, InsufficientPointsError, PMLError, SolveError,
                     ThresholdViolation, ValidationError)
from .fem import assemble, build_dofmap, build_mesh
from .harness import run_single, stability, sweep_h, sweep_phi, sweep_R
from .model import Geometry, PotentialSpec, SourceSpec
from .modes import decay_rate, mode_spectrum, pml_rates
from .oracle import error_vs_reference, exact_solution, norm_weighted, reference_solve_1d
from .radiation import fit_outgoing, laplace_probe, modal_trace
from .solver import Field, solve

__version__ = "0.1.0"
