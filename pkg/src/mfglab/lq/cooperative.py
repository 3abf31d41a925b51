"""Linear mean-field systems with decoupling ``Y^i = p X^i + r Xbar``.

Both the cooperative (social optimum) problem and the particle version of
the mean field game adjoint system have drift and driver linear in
``(x, xbar, y, ybar)`` with coefficients that do not depend on ``N``.  The
decoupling coefficients ``(p, r)`` are therefore the same for every ``N``
and for the limiting McKean-Vlasov system, where ``xbar`` is replaced by
the deterministic mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import TimeGrid
from ..ode import DEFAULT_BOUND, DEFAULT_TOL, integrate
from .mkv import (MfgDecoupling, solve_mean_bvp, cooperative_control_mkv, cooperative_driver_mkv,
                  cooperative_mean_control)
from .nplayer import NPlayerDecoupling
from .spec import LqSpec


@dataclass(frozen=True)
class LinearMeanFieldSystem:
    """Coefficients of ``drift = bx x + bm xbar + by y + bn ybar``,
    ``driver = fx x + fm xbar + fy y + fn ybar`` and
    ``terminal = gx x + gm xbar``."""

    bx: float
    bm: float
    by: float
    bn: float
    fx: float
    fm: float
    fy: float
    fn: float
    gx: float
    gm: float

    def drift(self, x, xbar, y, ybar):
        return self.bx * x + self.bm * xbar + self.by * y + self.bn * ybar

    def driver(self, x, xbar, y, ybar):
        return self.fx * x + self.fm * xbar + self.fy * y + self.fn * ybar

    def terminal(self, x, xbar):
        return self.gx * x + self.gm * xbar

    def rhs(self, t, pr):
        p, r = pr
        c = self
        return np.array([
            -p * (c.bx + c.by * p) - (c.fx + c.fy * p),
            -p * (c.bm + c.by * r + c.bn * (p + r))
            - r * (c.bx + c.bm + (c.by + c.bn) * (p + r))
            - (c.fm + c.fy * r + c.fn * (p + r)),
        ])

    def solve(self, grid: TimeGrid, *, tol=DEFAULT_TOL, bound=DEFAULT_BOUND):
        """Decoupling coefficients ``(p, r)`` on the grid, shape ``(n+1, 2)``."""
        path, sub = integrate(self.rhs, np.array([self.gx, self.gm]), grid, tol=tol, bound=bound)
        return path, sub

    def mean_matrix(self) -> np.ndarray:
        """Linear ODE for the means ``(m, n)`` of state and adjoint."""
        c = self
        return np.array([[c.bx + c.bm, c.by + c.bn], [-(c.fx + c.fm), -(c.fy + c.fn)]])

    def mean_path(self, spec: LqSpec, grid: TimeGrid, **kw):
        """Means ``(m, n)`` from the two-point problem ``n(T) = (gx + gm) m(T)``."""
        return solve_mean_bvp(spec, grid, self.mean_matrix(), self.gx + self.gm, **kw)


def mfg_particle_system(spec: LqSpec) -> LinearMeanFieldSystem:
    """Mean field game adjoint system with expectations replaced by means."""
    s = spec
    k = 1.0 / (2 * s.R)
    return LinearMeanFieldSystem(
        bx=s.A, bm=s.Abar, by=-s.B**2 * k, bn=-s.B * s.Bbar * k,
        fx=2 * s.Q, fm=0.0, fy=s.A, fn=-s.Sbar * s.B * k,
        gx=2 * s.QT, gm=0.0,
    )


def cooperative_system(spec: LqSpec) -> LinearMeanFieldSystem:
    """Social-optimum adjoint system (rescaled by N)."""
    s = spec
    s.check_cooperative()
    w = s.Rbar / (s.R + s.Rbar)
    cX = s.Sbar * (1 - w)
    cY = s.Bbar - w * (s.B + s.Bbar)
    k = 1.0 / (2 * s.R)
    kk = 1.0 / (2 * (s.R + s.Rbar))
    return LinearMeanFieldSystem(
        bx=s.A,
        bm=s.Abar - s.B * cX * k - s.Bbar * s.Sbar * kk,
        by=-s.B**2 * k,
        bn=-s.B * cY * k - s.Bbar * (s.B + s.Bbar) * kk,
        fx=2 * s.Q,
        fm=2 * s.Qbar - s.Sbar**2 * kk,
        fy=s.A,
        fn=s.Abar - s.Sbar * (s.B + s.Bbar) * kk,
        gx=2 * s.QT,
        gm=2 * s.QbarT,
    )


def cooperative_driver_nplayer(spec: LqSpec, X, Y):
    """Gradient of the social Hamiltonian in ``x^i`` (rescaled adjoints).

    The mean control is the empirical mean of the individual optimal
    controls, so this evaluation only sees the empirical measure.
    """
    s = spec
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xbar = X.mean(axis=-1, keepdims=True)
    ybar = Y.mean(axis=-1, keepdims=True)
    alpha = cooperative_control_mkv(s, Y, xbar, ybar)
    abar = alpha.mean(axis=-1, keepdims=True)
    return 2 * s.Q * X + 2 * s.Qbar * xbar + s.Sbar * abar + s.A * Y + s.Abar * ybar


def driver_identity_violation(spec: LqSpec, X, Y) -> float:
    """Max gap between the N-player social driver and the limiting driver
    evaluated with the law replaced by the same empirical means."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xbar = X.mean(axis=-1, keepdims=True)
    ybar = Y.mean(axis=-1, keepdims=True)
    lhs = cooperative_driver_nplayer(spec, X, Y)
    rhs = cooperative_driver_mkv(spec, X, Y, xbar, ybar)
    return float(np.max(np.abs(lhs - rhs)))


def solve_cooperative_lq(spec: LqSpec, grid: TimeGrid, **kw) -> MfgDecoupling:
    """Limiting cooperative problem as ``Y = eta X + psi`` with ``psi = r m``."""
    system = cooperative_system(spec)
    pr, sub = system.solve(grid, **kw)
    m, n = system.mean_path(spec, grid)
    return MfgDecoupling(spec, grid, pr[:, 0], pr[:, 1] * m, m, n, kind="cooperative", substeps=sub)


def solve_nplayer_social_lq(spec: LqSpec, N: int, grid: TimeGrid, **kw) -> NPlayerDecoupling:
    """Cooperative N-player adjoints ``Y^i = p X^i + r Xbar``."""
    spec.check_nplayer(N)
    system = cooperative_system(spec)
    pr, sub = system.solve(grid, **kw)
    sym = np.column_stack([pr, np.zeros((len(grid), 5))])
    return NPlayerDecoupling(spec, N, grid, "social", sym=sym, substeps=sub)


__all__ = [
    "LinearMeanFieldSystem", "mfg_particle_system", "cooperative_system",
    "cooperative_driver_nplayer", "cooperative_driver_mkv", "cooperative_mean_control",
    "driver_identity_violation", "solve_cooperative_lq", "solve_nplayer_social_lq",
]
