"""Replication engine and synchronously coupled LQ simulators.

Replications are processed in fixed-size chunks.  Every quantity computed
for a replication depends only on its own streams, and chunks are
reassembled in index order, so the worker count never changes a result.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import rng
from ..grid import TimeGrid
from ..lq.control import EquilibriumControlMap
from ..lq.cooperative import LinearMeanFieldSystem
from ..lq.mkv import MfgDecoupling
from ..lq.nplayer import NPlayerDecoupling, symmetric_gains
from ..lq.spec import LqSpec


def run_chunked(fn, n_reps: int, chunk_size: int, threads: int = 1) -> dict:
    """Apply ``fn(replication_indices) -> dict of arrays`` chunk by chunk.

    Outputs are concatenated along axis 0 in replication order.
    """
    if n_reps < 1 or chunk_size < 1:
        raise ValueError("need at least one replication and a positive chunk size")
    chunks = [np.arange(s, min(s + chunk_size, n_reps)) for s in range(0, n_reps, chunk_size)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}


def initial_states(mean: float, std: float, seed: int, reps, N: int,
                   channel=rng.CHANNEL_INITIAL) -> np.ndarray:
    """Initial draws ``(len(reps), N)``; exactly ``mean`` for a Dirac law."""
    reps = np.asarray(reps)[:, None]
    if std == 0:
        return np.full((reps.shape[0], N), float(mean))
    return mean + std * rng.stream_normals(seed, reps, np.arange(N)[None, :], channel, 1)[..., 0]


def brownian_increments(grid: TimeGrid, seed: int, reps, N: int, substeps: int = 1,
                        channel=rng.CHANNEL_NOISE) -> np.ndarray:
    """Increments ``(len(reps), N, n_steps)`` of one Brownian path per particle.

    With ``substeps > 1`` each increment aggregates that many finer ones, so
    grids that differ by an integer refinement share the same Brownian path.
    """
    reps = np.asarray(reps)[:, None]
    fine = rng.stream_normals(seed, reps, np.arange(N)[None, :], channel, grid.n_steps * substeps)
    fine = fine.reshape(fine.shape[:-1] + (grid.n_steps, substeps)).sum(axis=-1)
    return np.sqrt(grid.dt / substeps) * fine


def simulate_nash_coupled(spec: LqSpec, nash: NPlayerDecoupling, mfg: MfgDecoupling, X0, dW,
                          eval_idx, keep_alpha=False) -> dict:
    """Nash players and their mean-field copies on shared initials and noise.

    Returns per replication the player-averaged squared control gap at the
    evaluation nodes (``gap``), ``sup_t |Y^{12}_t|^2`` over the full grid
    (``offdiag_sup``) and optionally the Nash controls at the evaluation
    nodes (``alpha``, shape ``(reps, len(eval_idx), N)``).
    """
    grid = nash.grid
    N, dt = nash.N, grid.dt
    X = np.array(X0, dtype=float)
    Xm = X.copy()
    slot = {int(k): j for j, k in enumerate(eval_idx)}
    gap = np.empty((X.shape[0], len(eval_idx)))
    alpha_out = np.empty((X.shape[0], len(eval_idx), N)) if keep_alpha else None
    sup = np.zeros(X.shape[0])
    for k in range(grid.n_steps + 1):
        gains = symmetric_gains(spec, N, nash.sym[k])
        p1, p2, p3 = gains["pi"]
        m1, m2, m3 = gains["mu"]
        xbar = X.mean(axis=-1, keepdims=True)
        sup = np.maximum(sup, nash.offdiag_12(k, X) ** 2)
        if k in slot:
            alpha = p1 * X + p2 * xbar + p3
            gap[:, slot[k]] = np.mean((alpha - mfg.control(k, Xm)) ** 2, axis=-1)
            if keep_alpha:
                alpha_out[:, slot[k]] = alpha
        if k < grid.n_steps:
            noise = spec.sigma * dW[..., k]
            X_next = X + (m1 * X + m2 * xbar + m3) * dt + noise
            Xm = Xm + mfg.drift(k, Xm) * dt + noise
            X = X_next
    out = {"gap": gap, "offdiag_sup": sup}
    if keep_alpha:
        out["alpha"] = alpha_out
    return out


def simulate_mfg_copies(mfg: MfgDecoupling, X0, dW, eval_idx) -> np.ndarray:
    """Equilibrium controls of independent mean-field copies at the
    evaluation nodes, shape ``(len(eval_idx),) + X0.shape``."""
    grid = mfg.grid
    X = np.array(X0, dtype=float)
    out = np.empty((len(eval_idx),) + X.shape)
    slot = {int(k): j for j, k in enumerate(eval_idx)}
    for k in range(grid.n_steps + 1):
        if k in slot:
            out[slot[k]] = mfg.control(k, X)
        if k < grid.n_steps:
            X = X + mfg.drift(k, X) * grid.dt + mfg.spec.sigma * dW[..., k]
    return out


def simulate_linear_coupled(system: LinearMeanFieldSystem, pr, mn, sigma: float, grid: TimeGrid,
                            X0, dW, eval_idx, control=None) -> dict:
    """Linear mean-field particle system against its limiting copies.

    The particles carry ``Y^i = p X^i + r Xbar`` and the copies
    ``Y = p X + r m`` with the limiting means ``(m, n)``.  Returns the
    squared adjoint gap of particle 0 (``y_gap``), its empirical-measure
    variant (``y_gap_empirical``) and, when ``control(k, X, Y, Xm, Ym)``
    returns the pair of particle and copy controls, the player-averaged
    squared control gap (``gap``).
    """
    X = np.array(X0, dtype=float)
    Xm = X.copy()
    R = X.shape[0]
    slot = {int(k): j for j, k in enumerate(eval_idx)}
    y_gap = np.empty((R, len(eval_idx)))
    y_emp = np.empty((R, len(eval_idx)))
    gap = np.empty((R, len(eval_idx)))
    for k in range(grid.n_steps + 1):
        p, r = pr[k]
        m, n = mn[k]
        xbar = X.mean(axis=-1, keepdims=True)
        Y = p * X + r * xbar
        Ym = p * Xm + r * m
        if k in slot:
            j = slot[k]
            y_gap[:, j] = (Y[:, 0] - Ym[:, 0]) ** 2
            # limiting decoupling evaluated at the empirical law of the particles
            y_emp[:, j] = (Y[:, 0] - (p * X[:, 0] + r * xbar[:, 0])) ** 2
            if control is not None:
                a, am = control(k, X, Y, Xm, Ym)
                gap[:, j] = np.mean((a - am) ** 2, axis=-1)
        if k < grid.n_steps:
            noise = sigma * dW[..., k]
            ybar = Y.mean(axis=-1, keepdims=True)
            X_next = X + system.drift(X, xbar, Y, ybar) * grid.dt + noise
            Xm = Xm + system.drift(Xm, m, Ym, n) * grid.dt + noise
            X = X_next
    out = {"y_gap": y_gap, "y_gap_empirical": y_emp}
    if control is not None:
        out["gap"] = gap
    return out


def cooperative_controls(spec: LqSpec, N: int, coop: MfgDecoupling):
    """Control callback for :func:`simulate_linear_coupled` in the
    cooperative problem."""
    cmap = EquilibriumControlMap(spec, N)

    def control(k, X, Y, Xm, Ym):
        return cmap.cooperative(X, Y), coop.control(k, Xm)

    return control
