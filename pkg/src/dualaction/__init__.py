"""Periodic orbits and symplectic capacities of convex Hamiltonians on
R^{2n} through Clarke's dual action principle.

The package computes 1-periodic orbits of quadratically convex
Hamiltonians as critical points of the reduced dual functional, assigns
Morse and Conley-Zehnder indices, builds the filtered mod-2 Morse
complex, and evaluates the SH-capacity of smooth convex bodies as the
minimum of the action spectrum.
"""

from . import errors
from .action_functionals import (
    ActionEvaluation,
    direct_action,
    dual_action,
    dual_gradient,
    dual_hessian_apply,
    dual_hessian_bilinear,
    duality_gap,
    evaluate_dual,
    lift_to_orbit,
    orbit_residual_l2,
)
from .convex_model import (
    CappedProfile,
    EllipsoidGauge,
    GaugeDomain,
    GaugeProfileHamiltonian,
    HamiltonianModel,
    LinearProfile,
    PerturbedBallGauge,
    PowerProfile,
    QuadraticHamiltonian,
    TimePeriodicBump,
    WindowProfile,
    ball_gauge,
    conjugate_model,
    ellipsoid_gauge,
    estimate_convexity_bounds,
    fenchel_conjugate,
    perturbed_ball_gauge,
    profile_hamiltonian,
    slope_nonresonance_check,
)
from .loop_fourier import (
    FourierLoop,
    LoopGrid,
    loop_distance_mod_shift,
    primitive_zero_mean,
    rotation,
    standard_J,
    symplectic_quadform,
)

__version__ = "0.1.0"
