"""Picard-regression solvers for coupled particle FBSDEs and their
McKean-Vlasov limits.

Forward paths are simulated by Euler-Maruyama with the previous Picard
iterate of the adjoint process plugged into the drift.  The backward sweep
computes conditional expectations by least-squares projection onto
polynomials in symmetric statistics (own state, previous adjoint, and the
empirical means of both when the bundle reads the measure).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..errors import FlowNotContracting, PicardDiverged
from ..grid import TimeGrid
from ..tabular import Table
from .bundles import CoefficientBundle, EmpiricalMeasure
from .regression import martingale_regression, polynomial_features


BASIS_VARIABLES = ("x", "ylag", "mx", "my")


@dataclass(frozen=True)
class PicardSettings:
    max_iter: int = 300
    tol: float = 1e-6
    degree: int = 2
    ridge: float = 1e-10
    patience: int = 3
    basis: tuple = ("x", "mx", "my")

    def __post_init__(self):
        unknown = set(self.basis) - set(BASIS_VARIABLES)
        if unknown or not self.basis:
            raise ValueError(f"basis variables must be drawn from {BASIS_VARIABLES}, got {self.basis}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")


@dataclass
class ParticleCloud:
    """Sample paths of a particle FBSDE, shape ``(reps, N, nodes)``.

    ``Z`` holds the own-noise integrand only, on the ``n_steps`` intervals.
    Shadow arrays, when present, are the McKean-Vlasov copies driven by the
    same initial draws and increments against a frozen law flow.
    """

    grid: TimeGrid
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    dW: np.ndarray
    X0: np.ndarray
    seed: int
    replications: np.ndarray
    bundle: str
    alpha: np.ndarray | None = None
    shadow_X: np.ndarray | None = None
    shadow_Y: np.ndarray | None = None
    shadow_Z: np.ndarray | None = None
    shadow_alpha: np.ndarray | None = None
    picard_changes: list = field(default_factory=list)
    shadow_picard_changes: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def contraction_factors(self) -> list:
        c = self.picard_changes
        return [c[k] / c[k - 1] for k in range(1, len(c)) if c[k - 1] > 0]

    def to_table(self, rep: int = 0, particles=None) -> Table:
        particles = range(min(self.N, 8)) if particles is None else particles
        cols = {"t": self.grid.times}
        for i in particles:
            cols[f"X[{i}]"] = self.X[rep, i]
            cols[f"Y[{i}]"] = self.Y[rep, i]
            if self.shadow_X is not None:
                cols[f"Xmkv[{i}]"] = self.shadow_X[rep, i]
                cols[f"Ymkv[{i}]"] = self.shadow_Y[rep, i]
        meta = {"kind": "particle_cloud", "bundle": self.bundle, "seed": self.seed,
                "N": self.N, "replication": int(self.replications[rep]),
                "n_steps": self.grid.n_steps, "T": self.grid.T,
                "picard_iterations": len(self.picard_changes)}
        return Table(cols, meta)


@dataclass(frozen=True)
class LawFlow:
    """Sample representation of the time marginals of the limiting (X, Y)."""

    grid: TimeGrid
    x: np.ndarray  # (nodes, M)
    y: np.ndarray

    def measure(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.x[k], self.y[k])


@dataclass
class MkvSolution:
    cloud: ParticleCloud
    flow: LawFlow
    outer_distances: list

    @property
    def outer_iterations(self) -> int:
        return len(self.outer_distances)


def draw_inputs(cb: CoefficientBundle, grid: TimeGrid, seed: int, reps, N: int,
                channel_initial=rng.CHANNEL_INITIAL, channel_noise=rng.CHANNEL_NOISE):
    """Initial states and Brownian increments from counter-based streams."""
    reps = np.atleast_1d(np.asarray(reps))[:, None]
    parts = np.arange(N)[None, :]
    X0 = cb.x0_mean + cb.x0_std * rng.stream_normals(seed, reps, parts, channel_initial, 1)[..., 0]
    dW = np.sqrt(grid.dt) * rng.stream_normals(seed, reps, parts, channel_noise, grid.n_steps)
    return X0, dW


def _picard(cb, grid, X0, dW, settings, measure_at, use_measure_basis):
    """Picard iteration on processes; ``measure_at(k, X, Y)`` returns the
    measure argument at node ``k``."""
    R, N, n = dW.shape
    X = np.empty((R, N, n + 1))
    Y_old = np.zeros((R, N, n + 1))
    changes = []
    streak = 0
    for _ in range(settings.max_iter):
        # overflow is caught by the explicit finiteness checks below
        with np.errstate(over="ignore", invalid="ignore"):
            Y, Z = _picard_step(cb, grid, X, X0, Y_old, dW, settings, measure_at, use_measure_basis)
            scale = np.sqrt(np.mean(Y**2))
            change = float(np.sqrt(np.mean((Y - Y_old) ** 2)) / (scale if scale > 0 else 1.0))
        if not np.isfinite(change):
            raise PicardDiverged("Picard change overflowed; shorten the horizon")
        changes.append(change)
        Y_old = Y
        if change < settings.tol:
            break
        if len(changes) > 1 and change > changes[-2]:
            streak += 1
            if streak >= settings.patience:
                raise PicardDiverged(
                    f"Picard change grew {streak} times in a row (last {change:.3e}); shorten the horizon")
        else:
            streak = 0
    return X.copy(), Y_old, Z, changes


def _picard_step(cb, grid, X, X0, Y_old, dW, settings, measure_at, use_measure_basis):
    """One forward sweep (filling ``X`` in place) and one backward sweep."""
    R, N, n = dW.shape
    dt, t = grid.dt, grid.times
    X[..., 0] = X0
    for k in range(n):
        mu = measure_at(k, X[..., k], Y_old[..., k])
        X[..., k + 1] = X[..., k] + cb.drift(t[k], X[..., k], Y_old[..., k], mu) * dt + cb.sigma * dW[..., k]
    if not np.all(np.isfinite(X)):
        raise PicardDiverged("forward paths overflowed; shorten the horizon")
    Y = np.empty_like(Y_old)
    Z = np.empty((R, N, n))
    Y[..., n] = cb.terminal(X[..., n], measure_at(n, X[..., n], None))
    for k in range(n - 1, -1, -1):
        variables = _basis_variables(settings.basis, X[..., k], Y_old[..., k], use_measure_basis)
        feats = polynomial_features([v.ravel() for v in variables], settings.degree)
        if not np.all(np.isfinite(feats)):
            raise PicardDiverged(f"regression basis overflowed at node {k}; shorten the horizon")
        y_hat, z, proj = martingale_regression(feats, Y[..., k + 1].ravel(), dW[..., k].ravel(),
                                               dt, settings.ridge)
        mu = measure_at(k, X[..., k], Y_old[..., k])
        F = cb.driver(t[k], X[..., k], Y_old[..., k], z.reshape(R, N), mu)
        Y[..., k] = (y_hat + proj.project(np.asarray(F, float).ravel()) * dt).reshape(R, N)
        Z[..., k] = z.reshape(R, N)
        if not np.all(np.isfinite(Y[..., k])):
            raise PicardDiverged(f"adjoint overflowed at node {k}; shorten the horizon")
    return Y, Z


def _basis_variables(names, x, ylag, use_measure):
    shape = x.shape
    pool = {"x": lambda: x, "ylag": lambda: ylag,
            "mx": lambda: np.broadcast_to(x.mean(axis=-1, keepdims=True), shape),
            "my": lambda: np.broadcast_to(ylag.mean(axis=-1, keepdims=True), shape)}
    return [pool[n]() for n in names if use_measure or n not in ("mx", "my")]


def _controls(cb, grid, X, Y, measure_at):
    if cb.control is None:
        return None
    out = np.empty_like(X)
    for k in range(len(grid)):
        out[..., k] = cb.control(grid.times[k], X[..., k], Y[..., k], measure_at(k, X[..., k], Y[..., k]))
    return out


def solve_particle_fbsde(cb: CoefficientBundle, N: int, grid: TimeGrid, picard: PicardSettings | None = None,
                         seed: int = 0, *, replications=(0,), flow: LawFlow | None = None) -> ParticleCloud:
    """Solve the N-particle system coupled through its empirical measure.

    Parameters
    ----------
    replications : sequence of int
        Independent copies of the system; their streams are keyed by
        ``(seed, replication, particle)``.
    flow : LawFlow, optional
        When given, also solve the McKean-Vlasov copies of every particle
        against this frozen flow, on the same initial draws and increments.

    Raises
    ------
    PicardDiverged, RegressionSingular
    """
    if N < 2:
        raise ValueError("particle system needs N >= 2")
    if abs(grid.T - cb.T) > 1e-12:
        raise ValueError(f"grid horizon {grid.T} differs from bundle horizon {cb.T}")
    picard = picard or PicardSettings()
    reps = np.asarray(replications, dtype=np.int64)
    X0, dW = draw_inputs(cb, grid, seed, reps, N)

    def empirical(k, x, y):
        return EmpiricalMeasure(x, y)

    X, Y, Z, changes = _picard(cb, grid, X0, dW, picard, empirical, cb.uses_measure)
    cloud = ParticleCloud(grid, X, Y, Z, dW, X0, seed, reps, cb.name,
                          alpha=_controls(cb, grid, X, Y, empirical), picard_changes=changes)
    if flow is not None:
        frozen = _frozen(flow)
        Xs, Ys, Zs, ch = _picard(cb, grid, X0, dW, picard, frozen, False)
        cloud.shadow_X, cloud.shadow_Y, cloud.shadow_Z = Xs, Ys, Zs
        cloud.shadow_alpha = _controls(cb, grid, Xs, Ys, frozen)
        cloud.shadow_picard_changes = ch
    return cloud


def _frozen(flow: LawFlow):
    def measure_at(k, x, y):
        return flow.measure(k)
    return measure_at


def solve_mkv_fbsde(cb: CoefficientBundle, M: int, grid: TimeGrid, picard: PicardSettings | None = None,
                    seed: int = 0, *, tol=1e-6, max_outer=30, patience=3) -> MkvSolution:
    """Fixed point on the law flow of the McKean-Vlasov FBSDE.

    ``M`` law particles draw from dedicated reference streams.  The first
    flow is the empirical law of the ``M``-particle coupled system; each
    outer step solves ``M`` decoupled FBSDEs against the frozen flow and
    replaces the flow by their empirical law.  The stopping statistic is
    the synchronous-coupling bound ``max_t (mean |dX|^2 + |dY|^2)^(1/2)``,
    which dominates the joint W2 distance between consecutive flows.

    Raises
    ------
    FlowNotContracting
        Distances grew ``patience`` times in a row or ``max_outer`` was hit.
    """
    picard = picard or PicardSettings()
    X0, dW = draw_inputs(cb, grid, seed, [0], M, rng.CHANNEL_REFERENCE, rng.CHANNEL_REFERENCE_NOISE)

    def empirical(k, x, y):
        return EmpiricalMeasure(x, y)

    X, Y, Z, changes = _picard(cb, grid, X0, dW, picard, empirical, cb.uses_measure)
    flow = LawFlow(grid, X[0].T.copy(), Y[0].T.copy())
    distances = []
    streak = 0
    for _ in range(max_outer):
        Xn, Yn, Zn, changes = _picard(cb, grid, X0, dW, picard, _frozen(flow), False)
        d = float(np.max(np.sqrt(np.mean((Xn - X) ** 2 + (Yn - Y) ** 2, axis=(0, 1)))))
        distances.append(d)
        X, Y, Z = Xn, Yn, Zn
        flow = LawFlow(grid, X[0].T.copy(), Y[0].T.copy())
        if d < tol:
            cloud = ParticleCloud(grid, X, Y, Z, dW, X0, seed, np.array([0]), cb.name,
                                  alpha=_controls(cb, grid, X, Y, _frozen(flow)), picard_changes=changes)
            return MkvSolution(cloud, flow, distances)
        if len(distances) > 1 and d > distances[-2]:
            streak += 1
            if streak >= patience:
                raise FlowNotContracting(f"flow distance grew {streak} times in a row (last {d:.3e})")
        else:
            streak = 0
    raise FlowNotContracting(f"flow did not converge in {max_outer} outer iterations (last {distances[-1]:.3e})")
