"""Linear-quadratic games solved by affine decoupling."""
from .control import EquilibriumControlMap
from .cooperative import (LinearMeanFieldSystem, cooperative_system, driver_identity_violation,
                          mfg_particle_system, solve_cooperative_lq, solve_nplayer_social_lq)
from .mkv import MfgDecoupling, solve_mean_bvp, solve_mkv_lq
from .nplayer import (NPlayerDecoupling, assemble_symmetric, solve_nplayer_lq, solve_nplayer_lq_dense,
                      solve_nplayer_lq_symmetric)
from .residual import ResidualReport, mfg_residual, nplayer_residual
from .spec import LqSpec, price_impact_spec

__all__ = [
    "LqSpec", "price_impact_spec", "MfgDecoupling", "NPlayerDecoupling", "EquilibriumControlMap",
    "LinearMeanFieldSystem", "solve_mkv_lq", "solve_mean_bvp", "solve_nplayer_lq",
    "solve_nplayer_lq_dense", "solve_nplayer_lq_symmetric", "assemble_symmetric",
    "solve_cooperative_lq", "solve_nplayer_social_lq", "cooperative_system", "mfg_particle_system",
    "driver_identity_violation", "ResidualReport", "mfg_residual", "nplayer_residual",
]
