"""Nudging and continuous data assimilation for 2D Benard convection.

Modules: ``grid`` (staggered fields and operators), ``elliptic`` (fast
Poisson/Helmholtz solves), ``solver`` (time stepping), ``assimilation``
(observations, interpolants, nudging forcings), ``experiments`` (twin runs
and metrics), ``config``/``io``/``cli`` (files and command line).
"""
__version__ = "0.1.0"

from .errors import BlowUpError, CompatibilityError, ConfigurationError  # noqa: E402
from .grid import GridSpec, State  # noqa: E402
from .solver import SolverParams, simulate, step  # noqa: E402

__all__ = [
    "BlowUpError",
    "CompatibilityError",
    "ConfigurationError",
    "GridSpec",
    "SolverParams",
    "State",
    "simulate",
    "step",
    "__version__",
]
