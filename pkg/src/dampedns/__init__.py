"""Pseudo-spectral solver for damped, driven 2D Navier-Stokes with attractor-dimension diagnostics."""

__version__ = "0.1.0"

from .bounds import best_bound_over_s, dim_bound_periodic, dim_bound_rot, dim_bound_s, scaling_transform
from .dynamics import BlowUpError, SimConfig, TrajectoryState, diagnostics, rhs, simulate, step
from .spectral import Grid, SpectralVectorField, leray_project, random_field, single_mode, sobolev_norm
from .variational import kaplan_yorke, lyapunov_spectrum, q_proxy, tangent_rhs

__all__ = [
    "BlowUpError",
    "Grid",
    "SimConfig",
    "SpectralVectorField",
    "TrajectoryState",
    "best_bound_over_s",
    "diagnostics",
    "dim_bound_periodic",
    "dim_bound_rot",
    "dim_bound_s",
    "kaplan_yorke",
    "leray_project",
    "lyapunov_spectrum",
    "q_proxy",
    "random_field",
    "rhs",
    "scaling_transform",
    "simulate",
    "single_mode",
    "sobolev_norm",
    "step",
    "tangent_rhs",
]
