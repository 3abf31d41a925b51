"""Discrete martingale residual of LQ decouplings.

Forward paths are simulated by Euler-Maruyama under the decoupled drift.
At each step the backward increment is checked against
``Y_{n+1} - Y_n + F_n dt - Z_n dW_n`` where ``Z_n`` is the discrete
martingale integrand ``E[Y_{n+1} dW_n | F_n] / dt``, i.e. the state
gradient of the affine map at node ``n+1`` times ``sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rng
from .control import EquilibriumControlMap
from .mkv import MfgDecoupling
from .nplayer import NPlayerDecoupling


@dataclass(frozen=True)
class ResidualReport:
    """Per-node mean squared residual, relative to ``dt^2 * mean E|Y|^2``."""

    per_node: np.ndarray
    relative: np.ndarray
    tol: float
    dt: float

    @property
    def max_relative(self) -> float:
        return float(self.relative.max())

    @property
    def passed(self) -> bool:
        return self.max_relative <= self.tol


def _initial(spec, seed, reps, particles):
    z = rng.stream_normals(seed, reps, particles, rng.CHANNEL_INITIAL, 1)[..., 0]
    return spec.mu0_mean + spec.mu0_std * z


def _noise(seed, reps, particles, n_steps, dt):
    return np.sqrt(dt) * rng.stream_normals(seed, reps, particles, rng.CHANNEL_NOISE, n_steps)


def mfg_residual(dec: MfgDecoupling, *, n_paths=1000, seed=0, tol=1e-6) -> ResidualReport:
    """Residual of a limiting (MKV) decoupling on ``n_paths`` independent paths."""
    s, g = dec.spec, dec.grid
    dt = g.dt
    X = _initial(s, seed, 0, np.arange(n_paths))
    dW = _noise(seed, 0, np.arange(n_paths), g.n_steps, dt)
    res = np.empty(g.n_steps)
    y2 = np.empty(g.n_steps + 1)
    y2[0] = np.mean(dec.y(0, X) ** 2)
    for k in range(g.n_steps):
        Y = dec.y(k, X)
        F = dec.driver(k, X)
        Xn = X + dec.drift(k, X) * dt + s.sigma * dW[:, k]
        Yn = dec.y(k + 1, Xn)
        Z = dec.eta[k + 1] * s.sigma
        res[k] = np.mean((Yn - Y + F * dt - Z * dW[:, k]) ** 2)
        X = Xn
        y2[k + 1] = np.mean(Yn**2)
    return ResidualReport(res, res / (dt**2 * y2.mean()), tol, dt)


def nplayer_residual(dec: NPlayerDecoupling, *, n_reps=1000, seed=0, tol=1e-6) -> ResidualReport:
    """Residual of the diagonal adjoints ``Y^{ii}`` of an N-player decoupling.

    Nash encodings use the Nash driver; the social encoding uses the
    cooperative driver.  Noise from every player enters through the full
    gradient of the affine map.
    """
    s, g, N = dec.spec, dec.grid, dec.N
    dt = g.dt
    cmap = EquilibriumControlMap(s, N)
    reps = np.arange(n_reps)[:, None]
    players = np.arange(N)[None, :]
    X = _initial(s, seed, reps, players)
    dW = _noise(seed, reps, players, g.n_steps, dt)
    social = dec.encoding == "social"
    res = np.empty(g.n_steps)
    y2 = []
    for k in range(g.n_steps):
        xbar = X.mean(axis=-1, keepdims=True)
        if social:
            p, r = dec.sym[k, :2]
            Yd = p * X + r * xbar
            alpha = cmap.cooperative(X, Yd)
            abar = alpha.mean(axis=-1, keepdims=True)
            ybar = Yd.mean(axis=-1, keepdims=True)
            kk = 1 / (2 * (s.R + s.Rbar))
            F = (2 * s.Q * X + (2 * s.Qbar - s.Sbar**2 * kk) * xbar + s.A * Yd
                 + (s.Abar - s.Sbar * (s.B + s.Bbar) * kk) * ybar)
        else:
            Ym = dec.adjoints(k, X)
            Yd = np.diagonal(Ym, axis1=-2, axis2=-1)
            alpha = cmap.nash(X, Ym)
            abar = alpha.mean(axis=-1, keepdims=True)
            F = (2 * s.Q * X + s.Sbar * abar + (2 * s.Qbar / N) * xbar + s.A * Yd
                 + s.Abar * Ym.mean(axis=-1))
        y2.append(np.mean(Yd**2))
        drift = s.A * X + s.Abar * xbar + s.B * alpha + s.Bbar * abar
        Xn = X + drift * dt + s.sigma * dW[..., k]
        Yn = dec.diagonal(k + 1, Xn)
        # gradient of Y^{ii}_{n+1} in X^k: own weight w_own, others w_other
        w_own, w_other = _diag_gradient(dec, k + 1)
        noise_sum = dW[..., k].sum(axis=-1, keepdims=True)
        ZdW = s.sigma * ((w_own - w_other) * dW[..., k] + w_other * noise_sum)
        res[k] = np.mean((Yn - Yd + F * dt - ZdW) ** 2)
        X = Xn
    y2.append(np.mean(dec.diagonal(g.n_steps, X) ** 2))
    return ResidualReport(res, res / (dt**2 * np.mean(y2)), tol, dt)


def _diag_gradient(dec: NPlayerDecoupling, k: int):
    N = dec.N
    if dec.encoding == "social":
        p, r = dec.sym[k, :2]
        return p + r / N, r / N
    if dec.encoding == "symmetric":
        a, b = dec.sym[k, :2]
        return a + b / N, b / N
    # dense: exchangeable maps share these weights; read player 0's row
    row = dec.P[k, 0]
    return row[0], (row[1] if N > 1 else 0.0)
