"""fluxlab: simulation and verification of current fluctuations for
independent lattice random walks.

The package simulates the microscopic particle system exactly (compound
Poisson displacements at observation epochs), evaluates the analytic
Gaussian limit covariance of the scaled current, and statistically checks
that the finite-dimensional distributions converge to the limit law.
"""

__version__ = "0.1.0"

from .errors import FluxlabError
from .functions import (
    BoxIndicator,
    GaussianPacket,
    Hermite1D,
    ProductOf1D,
    gaussian_bump,
    hermite_gaussian,
)
from .kernels import JumpKernel, sample_displacement, transition_probability, validate_kernel
from .laws import (
    InitialLaw,
    custom_law,
    deterministic_law,
    geometric_law,
    moments_of_law,
    poisson_law,
)
from .limit import (
    LimitSpec,
    SpaceTimePoint,
    box_pair_integral,
    gaussian_density,
    increment_variance,
    initial_covariance,
    limit_covariance,
    motion_covariance,
    pair_integral,
    quadratic_forms,
    sample_limit_gaussian,
)
from .rng import RngStream
from .simulate import (
    CurrentPath,
    SimulationPlan,
    integer_part,
    make_plan,
    run_replica,
    sample_initial,
    truncation_radius,
)
from .harness import (
    compare_covariance,
    convergence_table,
    normality_test,
    projection_normality,
    run_ensemble,
)

__all__ = [name for name in dir() if not name.startswith("_")]
