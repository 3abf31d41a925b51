from .config import STUDIES, StudyConfig, default_config
from .report import StudyReport
from .studies import (STUDY_FUNCTIONS, concentration_study, cooperative_gap_study, fbsde_study,
                      grid_refinement_check, master_gap_study, nash_gap_study, offdiag_study,
                      price_impact_study, run_study)

__all__ = [
    "STUDIES", "StudyConfig", "StudyReport", "default_config", "run_study", "grid_refinement_check",
    "STUDY_FUNCTIONS", "nash_gap_study", "offdiag_study", "concentration_study",
    "cooperative_gap_study", "master_gap_study", "price_impact_study", "fbsde_study",
]
