"""Numerical laboratory for N-player games and their mean-field limits."""
__version__ = "0.1.0"

from .errors import MfgLabError  # noqa: E402
from .grid import TimeGrid  # noqa: E402

__all__ = ["__version__", "MfgLabError", "TimeGrid"]
