"""Log-gas toolkit: equilibrium measures, beta-ensemble samplers,
convexified Hamiltonians, and statistical diagnostics."""

__version__ = "0.1.0"

from .potentials import Potential, parse_potential  # noqa: F401
from .equilibrium import solve_equilibrium, classical_locations  # noqa: F401
