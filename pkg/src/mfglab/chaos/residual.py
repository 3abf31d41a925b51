"""Discrete martingale residual of particle clouds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import TimeGrid
from ..lq.cooperative import LinearMeanFieldSystem
from .bundles import CoefficientBundle, EmpiricalMeasure
from .particles import ParticleCloud, draw_inputs


@dataclass(frozen=True)
class CloudResidual:
    """``per_node[k] = E|Y_{k+1} - Y_k + F_k dt - Z_k dW_k|^2``; relative
    values divide by the time average of ``E|Y|^2``."""

    per_node: np.ndarray
    relative: np.ndarray
    terminal: float
    terminal_relative: float

    @property
    def max_relative(self) -> float:
        return float(self.relative.max())


def fbsde_residual(cloud: ParticleCloud, cb: CoefficientBundle, *, shadow=False, flow=None) -> CloudResidual:
    """Residual of the backward equation along the cloud's own paths.

    With ``shadow=True`` the McKean-Vlasov copies are checked against the
    frozen ``flow`` instead of the particle system against its empirical
    measure.
    """
    g = cloud.grid
    dt = g.dt
    if shadow:
        if flow is None or cloud.shadow_X is None:
            raise ValueError("shadow residual needs shadow paths and their flow")
        X, Y, Z = cloud.shadow_X, cloud.shadow_Y, cloud.shadow_Z
        measure_at = lambda k, x, y: flow.measure(k)
    else:
        X, Y, Z = cloud.X, cloud.Y, cloud.Z
        measure_at = lambda k, x, y: EmpiricalMeasure(x, y)
    n = g.n_steps
    res = np.empty(n)
    for k in range(n):
        F = cb.driver(g.times[k], X[..., k], Y[..., k], Z[..., k], measure_at(k, X[..., k], Y[..., k]))
        r = Y[..., k + 1] - Y[..., k] + F * dt - Z[..., k] * cloud.dW[..., k]
        res[k] = np.mean(r**2)
    y2 = float(np.mean(Y**2))
    scale = y2 if y2 > 0 else 1.0
    term = float(np.mean((Y[..., n] - cb.terminal(X[..., n], measure_at(n, X[..., n], None))) ** 2))
    return CloudResidual(res, res / scale, term, term / scale)


def inject_linear_decoupling(cb: CoefficientBundle, system: LinearMeanFieldSystem, N: int, grid: TimeGrid,
                             seed: int = 0, replications=(0,)) -> ParticleCloud:
    """Cloud built from the exact decoupling ``Y = p X + r Xbar`` of a
    linear bundle, with ``Z`` the node-ahead gradient times ``sigma``."""
    pr, _ = system.solve(grid)
    reps = np.asarray(replications, dtype=np.int64)
    X0, dW = draw_inputs(cb, grid, seed, reps, N)
    n = grid.n_steps
    X = np.empty(X0.shape + (n + 1,))
    Y = np.empty_like(X)
    Z = np.empty(X0.shape + (n,))
    X[..., 0] = X0
    for k in range(n + 1):
        xbar = X[..., k].mean(axis=-1, keepdims=True)
        Y[..., k] = pr[k, 0] * X[..., k] + pr[k, 1] * xbar
        if k == n:
            break
        mu = EmpiricalMeasure(X[..., k], Y[..., k])
        X[..., k + 1] = X[..., k] + cb.drift(grid.times[k], X[..., k], Y[..., k], mu) * grid.dt + cb.sigma * dW[..., k]
        Z[..., k] = (pr[k + 1, 0] + pr[k + 1, 1] / N) * cb.sigma
    return ParticleCloud(grid, X, Y, Z, dW, X0, seed, reps, cb.name)
