"""Nash equilibrium of the LQ N-player game by affine decoupling.

The adjoint family ``Y^{ij}`` is affine in the state vector.  Two encodings
are provided:

* dense: ``Y[i*N + j] = P[i*N + j] @ X + q[i*N + j]``, integrated directly
  (the oracle, limited to moderate ``N``);
* symmetric: ``Y^{ii} = a X^i + b Xbar + c`` and
  ``Y^{ij} = (d X^i + e X^j + f Xbar + g) / N`` for ``i != j``, seven scalar
  ODEs valid for every ``N`` by exchangeability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DenseLimitExceeded, SingularOptimalitySystem
from ..grid import TimeGrid
from ..ode import DEFAULT_BOUND, DEFAULT_TOL, euler_backward, integrate
from ..tabular import Table
from .spec import LqSpec

DENSE_LIMIT = 64
SYMMETRIC_NAMES = ("a", "b", "c", "d", "e", "f", "g")


@dataclass(frozen=True)
class NPlayerDecoupling:
    """Affine decoupling of the N-player adjoint system on a grid.

    Exactly one of ``sym`` (shape ``(n+1, 7)``) or the pair ``P``/``q``
    (shapes ``(n+1, N*N, N)`` and ``(n+1, N*N)``) is populated.  The
    ``social`` encoding stores the cooperative adjoint ``Y^i = p X^i + r Xbar``
    in ``sym[:, :2]``.
    """

    spec: LqSpec
    N: int
    grid: TimeGrid
    encoding: str
    sym: np.ndarray | None = None
    P: np.ndarray | None = None
    q: np.ndarray | None = None
    substeps: int = 1

    def dense(self):
        """Assembled dense maps ``(P, q)`` at every grid node."""
        if self.encoding == "dense":
            return self.P, self.q
        if self.encoding == "social":
            raise ValueError("social decouplings have no off-diagonal adjoints")
        return assemble_symmetric(self.sym, self.N)

    def adjoints(self, k: int, X):
        """Adjoint matrix ``Y[..., i, j]`` at node ``k`` for states ``X[..., N]``."""
        X = np.asarray(X, dtype=float)
        N = self.N
        if self.encoding == "dense":
            Y = X @ self.P[k].T + self.q[k]
            return Y.reshape(X.shape[:-1] + (N, N))
        a, b, c, d, e, f, g = self.sym[k]
        xbar = X.mean(axis=-1, keepdims=True)
        Y = ((d * X[..., :, None] + e * X[..., None, :] + f * xbar[..., None] + g) / N)
        diag = a * X + b * xbar + c
        idx = np.arange(N)
        Y[..., idx, idx] = diag
        return Y

    def diagonal(self, k: int, X):
        """``Y^{ii}`` only; cheap for the symmetric and social encodings."""
        X = np.asarray(X, dtype=float)
        if self.encoding == "dense":
            return np.diagonal(self.adjoints(k, X), axis1=-2, axis2=-1)
        xbar = X.mean(axis=-1, keepdims=True)
        if self.encoding == "social":
            p, r = self.sym[k, :2]
            return p * X + r * xbar
        a, b, c = self.sym[k, :3]
        return a * X + b * xbar + c

    def offdiag_12(self, k: int, X):
        """``Y^{12}`` (players 0 and 1) at node ``k``."""
        X = np.asarray(X, dtype=float)
        if self.encoding == "dense":
            N = self.N
            return X @ self.P[k, 1] + self.q[k, 1] if N > 1 else np.zeros(X.shape[:-1])
        a, b, c, d, e, f, g = self.sym[k]
        return (d * X[..., 0] + e * X[..., 1] + f * X.mean(axis=-1) + g) / self.N

    def to_table(self) -> Table:
        meta = {"kind": f"nplayer_{self.encoding}_decoupling", "N": self.N,
                "n_steps": self.grid.n_steps, "T": self.grid.T, "rk4_substeps": self.substeps}
        meta.update({f"spec.{k}": v for k, v in self.spec.as_dict().items()})
        cols = {"t": self.grid.times}
        if self.encoding == "dense":
            N = self.N
            for r in range(N * N):
                i, j = divmod(r, N)
                for kk in range(N):
                    cols[f"P[{i}.{j}.{kk}]"] = self.P[:, r, kk]
                cols[f"q[{i}.{j}]"] = self.q[:, r]
        elif self.encoding == "social":
            cols["p"], cols["r"] = self.sym[:, 0], self.sym[:, 1]
        else:
            for j, name in enumerate(SYMMETRIC_NAMES):
                cols[name] = self.sym[:, j]
        return Table(cols, meta)

    @classmethod
    def from_table(cls, table: Table) -> "NPlayerDecoupling":
        spec = LqSpec(**{k[5:]: float(v) for k, v in table.meta.items() if k.startswith("spec.")})
        grid = TimeGrid(float(table.meta["T"]), int(table.meta["n_steps"]))
        N = int(table.meta["N"])
        enc = table.meta["kind"].removeprefix("nplayer_").removesuffix("_decoupling")
        sub = int(table.meta["rk4_substeps"])
        if enc == "dense":
            P = np.empty((len(grid), N * N, N))
            q = np.empty((len(grid), N * N))
            for r in range(N * N):
                i, j = divmod(r, N)
                for kk in range(N):
                    P[:, r, kk] = table[f"P[{i}.{j}.{kk}]"]
                q[:, r] = table[f"q[{i}.{j}]"]
            return cls(spec, N, grid, enc, P=P, q=q, substeps=sub)
        names = ("p", "r") if enc == "social" else SYMMETRIC_NAMES
        sym = np.column_stack([table[n] for n in names])
        if enc == "social":
            sym = np.column_stack([sym, np.zeros((len(grid), 5))])
        return cls(spec, N, grid, enc, sym=sym, substeps=sub)


def assemble_symmetric(sym, N: int):
    """Dense ``(P, q)`` from symmetric coefficients; works on any leading shape."""
    sym = np.asarray(sym, dtype=float)
    a, b, c, d, e, f, g = np.moveaxis(sym, -1, 0)
    lead = sym.shape[:-1]
    P = np.empty(lead + (N, N, N))
    q = np.empty(lead + (N, N))
    ex = lambda v: v[..., None, None, None]
    P[...] = ex(f) / N**2
    idx = np.arange(N)
    # row (i, j): own-state coefficient on column i, partner on column j
    P[..., idx[:, None], idx[None, :], idx[:, None]] += (d / N)[..., None, None]
    P[..., idx[:, None], idx[None, :], idx[None, :]] += (e / N)[..., None, None]
    q[...] = (g / N)[..., None, None]
    P[..., idx, idx, :] = (b / N)[..., None, None]
    P[..., idx, idx, idx] += a[..., None]
    q[..., idx, idx] = c[..., None]
    return P.reshape(lead + (N * N, N)), q.reshape(lead + (N * N,))


def _dense_rhs_factory(spec: LqSpec, N: int):
    s = spec
    K = 2 * s.R * np.eye(N) + (2 * s.Rbar / N**2) * np.ones((N, N))
    if abs(np.linalg.det(K / (2 * abs(s.R)))) < 1e-12:
        raise SingularOptimalitySystem(f"control elimination matrix singular at N = {N}")
    Kinv = np.linalg.inv(K)
    ones = np.ones((N, N)) / N
    drift_state = s.A * np.eye(N) + s.Abar * ones
    drift_ctrl = s.B * np.eye(N) + s.Bbar * ones
    idx = np.arange(N)

    def gains(P3, q2):
        # P3[i, j, :] and q2[i, j]: control alpha = Gx X + gc
        diagP, rowP = P3[idx, idx, :], P3.mean(axis=1)
        diagq, rowq = q2[idx, idx], q2.mean(axis=1)
        Gx = -Kinv @ ((s.Sbar / N) * np.eye(N) + s.B * diagP + s.Bbar * rowP)
        gc = -Kinv @ (s.B * diagq + s.Bbar * rowq)
        return Gx, gc

    def rhs(t, y):
        P3 = y[: N**3].reshape(N, N, N)
        q2 = y[N**3:].reshape(N, N)
        Gx, gc = gains(P3, q2)
        Mx = drift_state + drift_ctrl @ Gx
        v = drift_ctrl @ gc
        abar_x, abar_c = Gx.mean(axis=0), gc.mean()
        rowP, rowq = P3.mean(axis=1), q2.mean(axis=1)
        Dx = s.A * P3 + s.Abar * rowP[:, None, :] + (2 * s.Qbar / N**2)
        Dx[idx, idx, :] += s.Sbar * abar_x
        Dx[idx, idx, idx] += 2 * s.Q
        Dc = s.A * q2 + s.Abar * rowq[:, None]
        Dc[idx, idx] += s.Sbar * abar_c
        dP = -(P3 @ Mx) - Dx
        dq = -(P3 @ v) - Dc
        return np.concatenate((dP.ravel(), dq.ravel()))

    return rhs


def _dense_terminal(spec: LqSpec, N: int):
    P3 = np.full((N, N, N), 2 * spec.QbarT / N**2)
    idx = np.arange(N)
    P3[idx, idx, idx] += 2 * spec.QT
    return np.concatenate((P3.ravel(), np.zeros(N * N)))


def solve_nplayer_lq_dense(spec: LqSpec, N: int, grid: TimeGrid, *, dense_limit=DENSE_LIMIT,
                           scheme="rk4", tol=DEFAULT_TOL, bound=DEFAULT_BOUND) -> NPlayerDecoupling:
    """Dense affine decoupling of the N-player Nash system.

    Parameters
    ----------
    scheme : {"rk4", "euler"}
        ``"rk4"`` integrates the coefficient ODE with step halving;
        ``"euler"`` takes explicit first-order steps of the same ODE on the
        grid itself (for convergence-order checks).

    Raises
    ------
    DenseLimitExceeded, SingularOptimalitySystem, RiccatiBlowup
    """
    if N > dense_limit:
        raise DenseLimitExceeded(f"N = {N} exceeds dense limit {dense_limit}")
    if N < 1:
        raise ValueError("N must be >= 1")
    if spec.R + spec.Rbar / N == 0:
        raise SingularOptimalitySystem(f"R + Rbar/N vanishes at N = {N}")
    rhs = _dense_rhs_factory(spec, N)
    y_T = _dense_terminal(spec, N)
    if scheme == "rk4":
        path, sub = integrate(rhs, y_T, grid, tol=tol, bound=bound)
    elif scheme == "euler":
        path, sub = euler_backward(rhs, y_T, grid, bound=bound), 1
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    P = path[:, : N**3].reshape(len(grid), N * N, N)
    q = path[:, N**3:].reshape(len(grid), N * N)
    return NPlayerDecoupling(spec, N, grid, "dense", P=P, q=q, substeps=sub)


def symmetric_gains(spec: LqSpec, N: int, coeffs):
    """Feedback quantities implied by symmetric coefficients.

    Returns a dict with the row-mean coefficients ``rho``, the Nash control
    gains ``pi`` (``alpha^i = pi1 X^i + pi2 Xbar + pi3``) and the closed-loop
    drift gains ``mu`` (``drift^i = mu1 X^i + mu2 Xbar + mu3``).
    """
    s = spec
    a, b, c, d, e, f, g = coeffs
    rho1 = a / N + ((N - 1) * d - e) / N**2
    rho2 = b / N + (e * N + (N - 1) * f) / N**2
    rho3 = c / N + (N - 1) * g / N**2
    k1 = s.Sbar / N + s.B * a + s.Bbar * rho1
    k2 = s.B * b + s.Bbar * rho2
    k3 = s.B * c + s.Bbar * rho3
    w = s.Rbar / (N * s.R + s.Rbar)
    pi1 = -k1 / (2 * s.R)
    pi2 = -(k2 - w * (k1 + k2)) / (2 * s.R)
    pi3 = -k3 * (1 - w) / (2 * s.R)
    mu1 = s.A + s.B * pi1
    mu2 = s.Abar + s.B * pi2 + s.Bbar * (pi1 + pi2)
    mu3 = (s.B + s.Bbar) * pi3
    return {"rho": (rho1, rho2, rho3), "pi": (pi1, pi2, pi3), "mu": (mu1, mu2, mu3)}


def _symmetric_rhs_factory(spec: LqSpec, N: int):
    s = spec

    def rhs(t, y):
        a, b, c, d, e, f, g = y
        G = symmetric_gains(s, N, y)
        rho1, rho2, rho3 = G["rho"]
        pi1, pi2, pi3 = G["pi"]
        mu1, mu2, mu3 = G["mu"]
        return np.array([
            -a * mu1 - (2 * s.Q + s.A * a + s.Abar * rho1),
            -a * mu2 - b * (mu1 + mu2) - (s.Sbar * (pi1 + pi2) + 2 * s.Qbar / N + s.A * b + s.Abar * rho2),
            -(a + b) * mu3 - (s.Sbar * pi3 + s.A * c + s.Abar * rho3),
            -d * mu1 - s.A * d - N * s.Abar * rho1,
            -e * mu1 - s.A * e,
            -(d + e) * mu2 - f * (mu1 + mu2) - 2 * s.Qbar - s.A * f - N * s.Abar * rho2,
            -(d + e + f) * mu3 - s.A * g - N * s.Abar * rho3,
        ])

    return rhs


def symmetric_terminal(spec: LqSpec, N: int) -> np.ndarray:
    return np.array([2 * spec.QT, 2 * spec.QbarT / N, 0.0, 0.0, 0.0, 2 * spec.QbarT, 0.0])


def solve_nplayer_lq_symmetric(spec: LqSpec, N: int, grid: TimeGrid, *, tol=DEFAULT_TOL,
                               bound=DEFAULT_BOUND) -> NPlayerDecoupling:
    """Symmetric (seven-coefficient) decoupling of the N-player Nash system.

    Raises
    ------
    RiccatiBlowup
    """
    if N < 2:
        raise ValueError("symmetric encoding needs N >= 2")
    spec.check_nplayer(N)
    path, sub = integrate(_symmetric_rhs_factory(spec, N), symmetric_terminal(spec, N), grid,
                          tol=tol, bound=bound, probe=lambda y: y[0])
    return NPlayerDecoupling(spec, N, grid, "symmetric", sym=path, substeps=sub)


def solve_nplayer_lq(spec: LqSpec, N: int, grid: TimeGrid, **kw) -> NPlayerDecoupling:
    """Symmetric solve for ``N >= 2``; dense for a single player."""
    if N == 1:
        return solve_nplayer_lq_dense(spec, 1, grid, **kw)
    return solve_nplayer_lq_symmetric(spec, N, grid, **kw)
