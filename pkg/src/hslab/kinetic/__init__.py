"""Spatially homogeneous kinetic reference stack."""

from .collision import (
    collision_frequency,
    collision_operator,
    conservation_correction,
    linearized_forward,
    stable_dt,
)
from .covariance import (
    covariance_evolution,
    equilibrium_covariance_matrix,
    fluctuation_dissipation_gap,
    ld_hamiltonian,
    noise_covariance,
    noise_form_matrix,
    recollision_apply,
    recollision_kernel,
    sigma_apply,
    sigma_identity_residual,
    spohn_covariance,
)
from .dsmc import dsmc_relax
from .grid import GridDensity, VelocityGrid, maxwellian, sphere_quadrature
from .linearized import AdjointPropagator, adjoint_apply, adjoint_matrix, backward_semigroup
from .solver import FPath, h_functional, solve_boltzmann

__all__ = [
    "VelocityGrid",
    "GridDensity",
    "maxwellian",
    "sphere_quadrature",
    "collision_operator",
    "linearized_forward",
    "conservation_correction",
    "collision_frequency",
    "stable_dt",
    "solve_boltzmann",
    "h_functional",
    "FPath",
    "adjoint_apply",
    "adjoint_matrix",
    "backward_semigroup",
    "AdjointPropagator",
    "noise_covariance",
    "noise_form_matrix",
    "recollision_kernel",
    "recollision_apply",
    "sigma_apply",
    "sigma_identity_residual",
    "covariance_evolution",
    "spohn_covariance",
    "equilibrium_covariance_matrix",
    "fluctuation_dissipation_gap",
    "ld_hamiltonian",
    "dsmc_relax",
]
