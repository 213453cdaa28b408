"""Kolmogorov n-width upper bounds for stationary Navier-Stokes solution sets.

Taylor-Hood discretization on polygonal meshes, eigenfunction forcings
scaled to the small-data regime, Gram-weighted POD and decay-model fits.
"""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .constants import ConstantsReport, coercivity_constant, compute_constants, continuity_constant
from .decay import DecayFit, compare_models, fit_decay
from .eigen import ForcingSet, build_forcing_set, dirichlet_eigs, wstar_norm
from .fem import DofMap, build_dofmap
from .mesh import BoundarySpec, Mesh, generate_obstacle_channel, generate_rectangle, generate_step_domain
from .pipeline import ExperimentReport, Pipeline, run_pipeline
from .plot import emit_plot
from .pod import PodBasis, SnapshotSet, knw_curve, pod, projection_errors
from .solver import FlowSolution, solve_nse, solve_snapshot_set, solve_stokes

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "ConstantsReport",
    "coercivity_constant",
    "compute_constants",
    "continuity_constant",
    "DecayFit",
    "compare_models",
    "fit_decay",
    "ForcingSet",
    "build_forcing_set",
    "dirichlet_eigs",
    "wstar_norm",
    "DofMap",
    "build_dofmap",
    "BoundarySpec",
    "Mesh",
    "generate_obstacle_channel",
    "generate_rectangle",
    "generate_step_domain",
    "ExperimentReport",
    "Pipeline",
    "run_pipeline",
    "emit_plot",
    "PodBasis",
    "SnapshotSet",
    "knw_curve",
    "pod",
    "projection_errors",
    "FlowSolution",
    "solve_nse",
    "solve_snapshot_set",
    "solve_stokes",
]

__version__ = "0.1.0"
