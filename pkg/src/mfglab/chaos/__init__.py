"""Generic particle FBSDE solvers and the Hamiltonian minimizer."""
from .bundles import (CoefficientBundle, EmpiricalMeasure, available_bundles, get_bundle, lq_bundle,
                      price_impact_bundle, register_bundle, tanh_flocking_bundle, tanh_saturation_bundle)
from .hamiltonian import HamiltonianBundle, HamiltonianMinimum, lq_hamiltonian, minimize_hamiltonian
from .particles import (LawFlow, MkvSolution, ParticleCloud, PicardSettings, solve_mkv_fbsde,
                        solve_particle_fbsde)
from .residual import CloudResidual, fbsde_residual, inject_linear_decoupling

__all__ = [
    "CoefficientBundle", "EmpiricalMeasure", "available_bundles", "get_bundle", "register_bundle",
    "lq_bundle", "price_impact_bundle", "tanh_flocking_bundle", "tanh_saturation_bundle",
    "HamiltonianBundle", "HamiltonianMinimum", "lq_hamiltonian", "minimize_hamiltonian",
    "LawFlow", "MkvSolution", "ParticleCloud", "PicardSettings", "solve_mkv_fbsde",
    "solve_particle_fbsde", "CloudResidual", "fbsde_residual", "inject_linear_decoupling",
]
