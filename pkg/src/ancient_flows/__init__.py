"""Ancient gradient flows of elliptic length functionals near a critical point:
spectra, unstable-manifold construction, forward flows, the reduced functional
on the kernel, and two ODE studies (differential-inequality trichotomy and
latitude flows with prescribed arrival time)."""

from .variational import (DomainError, EllipticFunctional, NotCriticalError, PeriodicGrid, evaluate,
                          get_functional, gradient, gradient_split, register_functional)
from .spectral_core import EigenSystem, eigendecompose, iota_minus, iota_zero, weighted_norm
from .linear_solver import Forcing, solve_linear_ancient
from .ancient_constructor import construct_ancient
from .flow_simulator import evolve, evolve_parametric_latitude, mode_energies
from .critical_manifold import ReducedFunctional
from .trajectory import FlowTrajectory

__version__ = "0.1.0"
