"""Fixed-step RK4 with step halving for linear and Riccati-type ODEs."""
from __future__ import annotations

import numpy as np

from .errors import RiccatiBlowup
from .grid import TimeGrid

DEFAULT_BOUND = 1e8
DEFAULT_TOL = 1e-10


def _rk4_sweep(rhs, y_start, t_nodes, substeps, bound):
    """RK4 over ``t_nodes`` (any direction); returns values at every node."""
    out = np.empty((len(t_nodes),) + np.shape(y_start))
    y = np.array(y_start, dtype=float)
    out[0] = y
    for k in range(len(t_nodes) - 1):
        t0, t1 = t_nodes[k], t_nodes[k + 1]
        h = (t1 - t0) / substeps
        for s in range(substeps):
            t = t0 + s * h
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2, y + h / 2 * k1)
            k3 = rhs(t + h / 2, y + h / 2 * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)) or np.max(np.abs(y), initial=0.0) > bound:
                raise RiccatiBlowup(t + h, bound)
        out[k + 1] = y
    return out


def integrate(rhs, y_start, grid: TimeGrid, *, backward=True, tol=DEFAULT_TOL,
              bound=DEFAULT_BOUND, probe=None, max_halvings=12):
    """Integrate ``y' = rhs(t, y)`` over the grid with adaptive substepping.

    Parameters
    ----------
    rhs : callable(t, y) -> array like y
    y_start : array_like
        Value at ``T`` when ``backward`` else at 0.
    grid : TimeGrid
    tol : float
        The number of RK4 substeps per grid interval is doubled until the
        probed value at the far end changes by less than ``tol``.
    probe : callable(y) -> array, optional
        Quantity monitored for convergence; defaults to the whole state.

    Returns
    -------
    values : ndarray, shape (n_steps + 1, *y.shape)
        Indexed in forward time order (row 0 is t = 0).
    substeps : int
    """
    nodes = grid.times[::-1] if backward else grid.times
    probe = probe or (lambda y: y)
    substeps = 1
    path = _rk4_sweep(rhs, y_start, nodes, substeps, bound)
    for _ in range(max_halvings):
        finer = _rk4_sweep(rhs, y_start, nodes, 2 * substeps, bound)
        diff = np.max(np.abs(np.asarray(probe(finer[-1])) - np.asarray(probe(path[-1]))))
        path, substeps = finer, 2 * substeps
        if diff < tol:
            break
    return (path[::-1] if backward else path), substeps


def euler_backward(rhs, y_terminal, grid: TimeGrid, *, bound=DEFAULT_BOUND):
    """Explicit backward Euler on the grid itself (first order)."""
    out = np.empty((len(grid),) + np.shape(y_terminal))
    y = np.array(y_terminal, dtype=float)
    out[-1] = y
    t = grid.times
    for k in range(grid.n_steps, 0, -1):
        y = y - (t[k] - t[k - 1]) * rhs(t[k], y)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y), initial=0.0) > bound:
            raise RiccatiBlowup(t[k - 1], bound)
        out[k - 1] = y
    return out
