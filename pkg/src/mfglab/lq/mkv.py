"""Mean field game limit of the LQ game via an affine decoupling field."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ..errors import BvpSingular
from ..grid import TimeGrid
from ..ode import DEFAULT_BOUND, DEFAULT_TOL, integrate
from ..tabular import Table
from .spec import LqSpec


@dataclass(frozen=True)
class MfgDecoupling:
    """Grid-sampled decoupling ``Y_t = eta(t) X_t + psi(t)``.

    ``m`` and ``n`` are the equilibrium means of ``X`` and ``Y``.  For the
    cooperative problem ``psi`` absorbs the mean-field feedback and ``kind``
    records which system produced the record.
    """

    spec: LqSpec
    grid: TimeGrid
    eta: np.ndarray
    psi: np.ndarray
    m: np.ndarray
    n: np.ndarray
    kind: str = "mfg"
    substeps: int = 1

    def y(self, k: int, x):
        return self.eta[k] * np.asarray(x) + self.psi[k]

    def z(self, k: int) -> float:
        return self.eta[k] * self.spec.sigma

    def control(self, k: int, x):
        """Equilibrium control at node ``k`` for states ``x``."""
        s = self.spec
        if self.kind == "mfg":
            return -(s.B / (2 * s.R)) * self.y(k, x)
        return cooperative_control_mkv(s, self.y(k, x), self.m[k], self.n[k])

    def drift(self, k: int, x):
        """Decoupled forward drift at node ``k``."""
        s = self.spec
        a = self.control(k, x)
        if self.kind == "mfg":
            abar = -(s.B / (2 * s.R)) * self.n[k]
        else:
            abar = cooperative_mean_control(s, self.m[k], self.n[k])
        return s.A * np.asarray(x) + s.Abar * self.m[k] + s.B * a + s.Bbar * abar

    def driver(self, k: int, x):
        s = self.spec
        y = self.y(k, x)
        if self.kind == "mfg":
            return 2 * s.Q * np.asarray(x) - (s.Sbar * s.B / (2 * s.R)) * self.n[k] + s.A * y
        return cooperative_driver_mkv(s, x, y, self.m[k], self.n[k])

    def control_l2(self) -> float:
        """Time integral of the second moment of the equilibrium control.

        Evaluated from the Gaussian moments of ``X``; reported so the user
        can confirm admissibility (finite energy) of the solved control.
        """
        var = state_variance(self)
        s = self.spec
        gain = -(s.B / (2 * s.R)) * self.eta
        mean_ctrl = np.array([self.control(k, self.m[k]) for k in range(len(self.grid))])
        return float(trapezoid(gain**2 * var + mean_ctrl**2, self.grid.times))

    def to_table(self) -> Table:
        meta = {"kind": f"{self.kind}_decoupling", "rk4_substeps": self.substeps,
                "n_steps": self.grid.n_steps, "T": self.grid.T}
        meta.update({f"spec.{k}": v for k, v in self.spec.as_dict().items()})
        return Table({"t": self.grid.times, "eta": self.eta, "psi": self.psi,
                      "m": self.m, "n": self.n}, meta)

    @classmethod
    def from_table(cls, table: Table) -> "MfgDecoupling":
        spec = LqSpec(**{k[5:]: float(v) for k, v in table.meta.items() if k.startswith("spec.")})
        grid = TimeGrid(float(table.meta["T"]), int(table.meta["n_steps"]))
        kind = table.meta["kind"].removesuffix("_decoupling")
        return cls(spec, grid, table["eta"], table["psi"], table["m"], table["n"],
                   kind=kind, substeps=int(table.meta["rk4_substeps"]))


def state_variance(dec: MfgDecoupling) -> np.ndarray:
    """Variance of ``X_t`` under the decoupled dynamics (forward Lyapunov ODE)."""
    s = dec.spec
    rate = s.A - (s.B**2 / (2 * s.R)) * dec.eta
    out = np.empty(len(dec.grid))
    out[0] = s.mu0_std**2
    dt = dec.grid.dt
    # exact solution of v' = 2 rate v + sigma^2 with piecewise-linear rate
    for k in range(dec.grid.n_steps):
        r = 0.5 * (rate[k] + rate[k + 1])
        if abs(r) < 1e-14:
            out[k + 1] = out[k] + s.sigma**2 * dt
        else:
            g = np.exp(2 * r * dt)
            out[k + 1] = out[k] * g + s.sigma**2 * (g - 1) / (2 * r)
    return out


def mean_system_matrix(spec: LqSpec) -> np.ndarray:
    """Constant matrix of the linear ODE for the means ``(m, n)``."""
    s = spec
    k = 1.0 / (2 * s.R)
    return np.array([
        [s.A + s.Abar, -s.B * (s.B + s.Bbar) * k],
        [-2 * s.Q, s.Sbar * s.B * k - s.A],
    ])


def solve_mean_bvp(spec: LqSpec, grid: TimeGrid, L: np.ndarray, terminal_slope: float,
                   *, tol=DEFAULT_TOL, pivot_tol=1e-12):
    """Two-point problem ``(m, n)' = L (m, n)``, ``m(0) = mu0_mean``,
    ``n(T) = terminal_slope * m(T)`` by fundamental-matrix superposition."""
    phi, _ = integrate(lambda t, y: L @ y, np.eye(2), grid, backward=False, tol=tol)
    PT = phi[-1]
    pivot = PT[1, 1] - terminal_slope * PT[0, 1]
    scale = 1.0 + abs(PT[1, 1]) + abs(terminal_slope * PT[0, 1])
    if abs(pivot) < pivot_tol * scale:
        raise BvpSingular(f"mean two-point problem singular (pivot {pivot:.3e})")
    m0 = spec.mu0_mean
    n0 = -(PT[1, 0] - terminal_slope * PT[0, 0]) * m0 / pivot
    mn = phi @ np.array([m0, n0])
    return mn[:, 0], mn[:, 1]


def solve_mkv_lq(spec: LqSpec, grid: TimeGrid, *, tol=DEFAULT_TOL, bound=DEFAULT_BOUND) -> MfgDecoupling:
    """Solve the LQ mean field game by the decoupling ``Y = eta X + psi``.

    ``eta`` solves ``eta' = -2 A eta + (B^2 / 2R) eta^2 - 2 Q`` backward from
    ``2 QT``; the means solve a linear two-point problem; ``psi`` is then
    integrated backward jointly with the means from their terminal values.

    Raises
    ------
    RiccatiBlowup, BvpSingular
    """
    if grid.T != spec.T:
        raise ValueError(f"grid horizon {grid.T} differs from spec horizon {spec.T}")
    s = spec
    k = 1.0 / (2 * s.R)
    L = mean_system_matrix(s)
    m, n = solve_mean_bvp(s, grid, L, 2 * s.QT, tol=tol)

    def rhs(t, y):
        eta, psi = y[0], y[1]
        mn = y[2:]
        d_mn = L @ mn
        d_eta = -2 * s.A * eta + s.B**2 * k * eta**2 - 2 * s.Q
        d_psi = (-s.A * psi + s.Sbar * s.B * k * mn[1] - eta * s.Abar * mn[0]
                 + eta * s.B**2 * k * psi + eta * s.B * s.Bbar * k * mn[1])
        return np.concatenate(([d_eta, d_psi], d_mn))

    terminal = np.array([2 * s.QT, 0.0, m[-1], n[-1]])
    path, substeps = integrate(rhs, terminal, grid, tol=tol, bound=bound, probe=lambda y: y[:2])
    # the forward superposition values are used for the means themselves
    return MfgDecoupling(s, grid, path[:, 0], path[:, 1], m, n, kind="mfg", substeps=substeps)


def cooperative_mean_control(spec: LqSpec, mean_x, mean_y):
    """Mean of the optimal control in the cooperative problem."""
    s = spec
    return -(s.Sbar * np.asarray(mean_x) + (s.B + s.Bbar) * np.asarray(mean_y)) / (2 * (s.R + s.Rbar))


def cooperative_control_mkv(spec: LqSpec, y, mean_x, mean_y):
    """Individual optimal control of the limiting cooperative problem."""
    s = spec
    w = s.Rbar / (s.R + s.Rbar)
    return -(s.B * np.asarray(y) + s.Sbar * (1 - w) * mean_x
             + (s.Bbar - w * (s.B + s.Bbar)) * mean_y) / (2 * s.R)


def cooperative_driver_mkv(spec: LqSpec, x, y, mean_x, mean_y):
    """Adjoint driver of the limiting cooperative problem, built from the
    partial derivatives of the Hamiltonian plus the Lions-derivative terms
    evaluated against the true law (represented by its means)."""
    s = spec
    abar = cooperative_mean_control(s, mean_x, mean_y)
    return (2 * s.Q * np.asarray(x) + 2 * s.Qbar * mean_x + s.Sbar * abar
            + s.A * np.asarray(y) + s.Abar * mean_y)
