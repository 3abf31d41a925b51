"""Closed-form equilibrium controls of the LQ N-player games.

Arrays carry players on the last axis (states ``(..., N)``) and adjoint
matrices on the last two (``Y[..., i, j]``), so any number of replications
can be evaluated at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spec import LqSpec


@dataclass(frozen=True)
class EquilibriumControlMap:
    """Evaluators for the Nash and cooperative equilibrium controls."""

    spec: LqSpec
    N: int

    def __post_init__(self):
        self.spec.check_nplayer(self.N)

    @property
    def omega(self) -> float:
        """Weight ``(Rbar/N) / (R + Rbar/N)`` of the mean-control feedback."""
        s, N = self.spec, self.N
        return (s.Rbar / N) / (s.R + s.Rbar / N)

    def nash(self, X, Y):
        """Nash controls from states ``X`` and the adjoint matrix ``Y``."""
        s, N, w = self.spec, self.N, self.omega
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        y_diag = np.diagonal(Y, axis1=-2, axis2=-1)
        y_row = Y.mean(axis=-1)
        xbar = X.mean(axis=-1, keepdims=True)
        ybar = y_diag.mean(axis=-1, keepdims=True)
        ybarbar = Y.mean(axis=(-2, -1))[..., None]
        return -(1 / (2 * s.R)) * (
            (s.Sbar / N) * X - w * (s.Sbar / N) * xbar + s.B * y_diag + s.Bbar * y_row
            - w * (s.B * ybar + s.Bbar * ybarbar)
        )

    def nash_remainder(self, X, Y):
        """Part of the Nash control beyond ``-(B / 2R) Y^{ii}``."""
        s = self.spec
        y_diag = np.diagonal(np.asarray(Y, dtype=float), axis1=-2, axis2=-1)
        return self.nash(X, Y) + (s.B / (2 * s.R)) * y_diag

    def nash_mean_remainder(self, X, Y):
        """Part of the mean Nash control beyond ``-(B / 2R) mean_i Y^{ii}``."""
        s = self.spec
        y_diag = np.diagonal(np.asarray(Y, dtype=float), axis1=-2, axis2=-1)
        return self.nash(X, Y).mean(axis=-1) + (s.B / (2 * s.R)) * y_diag.mean(axis=-1)

    def nash_foc_residual(self, X, Y, alpha):
        """First-order condition of each player's Hamiltonian at ``alpha``."""
        s, N = self.spec, self.N
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        abar = np.asarray(alpha).mean(axis=-1, keepdims=True)
        return (2 * s.R * alpha + 2 * (s.Rbar / N) * abar + (s.Sbar / N) * X
                + s.B * np.diagonal(Y, axis1=-2, axis2=-1) + s.Bbar * Y.mean(axis=-1))

    def cooperative(self, X, Y):
        """Cooperative (social optimum) controls from states and adjoints ``Y[..., i]``."""
        s = self.spec
        s.check_cooperative()
        w = s.Rbar / (s.R + s.Rbar)
        xbar = np.asarray(X, dtype=float).mean(axis=-1, keepdims=True)
        ybar = np.asarray(Y, dtype=float).mean(axis=-1, keepdims=True)
        return -(s.B * np.asarray(Y) + s.Sbar * (1 - w) * xbar
                 + (s.Bbar - w * (s.B + s.Bbar)) * ybar) / (2 * s.R)

    def cooperative_foc_residual(self, X, Y, alpha):
        s = self.spec
        abar = np.asarray(alpha).mean(axis=-1, keepdims=True)
        return (2 * s.R * alpha + 2 * s.Rbar * abar + s.Sbar * np.asarray(X).mean(axis=-1, keepdims=True)
                + s.B * np.asarray(Y) + s.Bbar * np.asarray(Y).mean(axis=-1, keepdims=True))
