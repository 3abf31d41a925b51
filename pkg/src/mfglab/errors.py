"""Exception hierarchy shared by all solvers and studies.

Every error carries a class-level ``exit_code`` so the command-line front
end can map failures onto distinct process statuses without string matching.
"""


class MfgLabError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ConfigError(MfgLabError, ValueError):
    """Malformed or unknown configuration input."""

    exit_code = 2


class InvalidSpec(MfgLabError, ValueError):
    """Coefficient record violates a structural invariant."""

    exit_code = 2


class SolverError(MfgLabError, RuntimeError):
    """Base class for numerical failures inside a solver."""

    exit_code = 3


class RiccatiBlowup(SolverError):
    """Backward ODE left its magnitude bound before reaching t = 0."""

    def __init__(self, t, bound):
        super().__init__(f"decoupling field exceeded |value| <= {bound:g} at t = {t:.6g}")
        self.t = t
        self.bound = bound


class BvpSingular(SolverError):
    """Fundamental-matrix solve for the mean two-point problem is singular."""


class DenseLimitExceeded(SolverError):
    """Dense N-player solve requested above the configured size limit."""


class SingularOptimalitySystem(SolverError):
    """Linear system eliminating the controls is singular."""


class NonConvex(InvalidSpec):
    """Running cost is not strongly convex in the control."""


class NoConvergence(SolverError):
    """Iterative minimizer did not meet its residual tolerance."""


class OutsideDomain(SolverError, ValueError):
    """Non-finite or otherwise inadmissible evaluation point."""


class PicardDiverged(SolverError):
    """Picard iteration grew for several consecutive sweeps."""


class RegressionSingular(SolverError):
    """Normal equations are rank deficient beyond the ridge tolerance."""


class FlowNotContracting(SolverError):
    """Outer fixed point on the measure flow failed to contract."""


class UndefinedRegime(MfgLabError, ValueError):
    """Rate parameters fall on an excluded boundary of the piecewise table."""

    exit_code = 2


class EmptySample(MfgLabError, ValueError):
    """A distance or tail estimate was requested on an empty sample."""


class SizeLimit(MfgLabError, ValueError):
    """Exact assignment oracle requested above its size limit."""


class InsufficientReplications(MfgLabError, RuntimeError):
    """Confidence interval too wide relative to the estimate."""
