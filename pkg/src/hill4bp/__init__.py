"""Numerical toolkit for Lyapunov orbits, invariant manifolds, connections
and scattering maps of the Hill four-body problem."""
from .dynamics import DEFAULT_MU, ModelParams, PhaseState, derive_params

__all__ = ["DEFAULT_MU", "ModelParams", "PhaseState", "derive_params"]
__version__ = "0.1.0"
