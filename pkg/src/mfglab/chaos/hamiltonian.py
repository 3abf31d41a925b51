"""Pointwise minimization of a strongly convex Hamiltonian in the control."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import InvalidSpec, NoConvergence, OutsideDomain


@dataclass(frozen=True)
class HamiltonianBundle:
    """Control-dependent parts of the Hamiltonian ``f1(t,x,a,mu) + b1(t,x,a,mu) y``.

    ``df1`` and ``db1`` are the control derivatives.  ``d2f1``/``d2b1`` are
    optional second derivatives; when absent a central difference of the
    first derivatives is used.  ``box`` is ``None`` (all of R) or ``(lo, hi)``.
    """

    f1: Callable
    b1: Callable
    df1: Callable
    db1: Callable
    gamma: float
    box: tuple | None = None
    d2f1: Callable | None = None
    d2b1: Callable | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidSpec(f"convexity modulus must be positive, got {self.gamma}")
        if self.box is not None and not self.box[0] < self.box[1]:
            raise InvalidSpec(f"empty control box {self.box}")

    def foc(self, t, x, a, y, mu, chi):
        return self.df1(t, x, a, mu) + self.db1(t, x, a, mu) * y - chi

    def foc_slope(self, t, x, a, y, mu):
        if self.d2f1 is not None and self.d2b1 is not None:
            return self.d2f1(t, x, a, mu) + self.d2b1(t, x, a, mu) * y
        h = 1e-6 * (1 + np.abs(a))
        return (self.foc(t, x, a + h, y, mu, 0.0) - self.foc(t, x, a - h, y, mu, 0.0)) / (2 * h)

    def check_derivatives(self, rng: np.random.Generator, n_probes=32, rtol=1e-4, mu=None) -> float:
        """Worst relative mismatch between the supplied derivatives and
        central differences of ``f1``/``b1`` on random probes."""
        t = rng.uniform(0, 1, n_probes)
        x = rng.normal(size=n_probes)
        a = rng.normal(size=n_probes)
        if self.box is not None:
            a = np.clip(a, *self.box)
        h = 1e-5 * (1 + np.abs(a))
        worst = 0.0
        for fn, dfn in ((self.f1, self.df1), (self.b1, self.db1)):
            fd = (fn(t, x, a + h, mu) - fn(t, x, a - h, mu)) / (2 * h)
            exact = dfn(t, x, a, mu)
            worst = max(worst, float(np.max(np.abs(fd - exact) / (1 + np.abs(exact)))))
        if worst > rtol:
            raise InvalidSpec(f"control derivatives inconsistent (relative error {worst:.2e})")
        return worst


@dataclass(frozen=True)
class HamiltonianMinimum:
    """Minimizer together with diagnostics."""

    control: np.ndarray
    active_bound: np.ndarray
    residual: np.ndarray
    iterations: int


def minimize_hamiltonian(hb: HamiltonianBundle, t, x, y, mu=None, chi=0.0, *,
                         a0=None, max_iter=100) -> HamiltonianMinimum:
    """Solve ``df1 + db1 * y = chi`` in the control by damped Newton.

    The slope of the first-order condition is floored at ``2 * gamma``
    (strong convexity), so each step is a contraction; a box is handled by
    projection, and a bound is reported active when the condition pushes
    outward there.  Inputs broadcast elementwise.

    Raises
    ------
    OutsideDomain
        Non-finite inputs.
    NoConvergence
        Residual above ``1e-10 (1 + |chi|)`` after ``max_iter`` steps.
    """
    t, x, y, chi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y, chi)))
    if not all(np.all(np.isfinite(v)) for v in (t, x, y, chi)):
        raise OutsideDomain("non-finite Hamiltonian evaluation point")
    a = np.zeros_like(x) if a0 is None else np.broadcast_to(np.asarray(a0, float), x.shape).copy()
    lo, hi = hb.box if hb.box is not None else (-np.inf, np.inf)
    a = np.clip(a, lo, hi)
    tol = 1e-10 * (1 + np.abs(chi))
    floor = 2 * hb.gamma
    for it in range(max_iter + 1):
        r = hb.foc(t, x, a, y, mu, chi)
        at_lo = (a <= lo) & (r > 0)
        at_hi = (a >= hi) & (r < 0)
        active = at_lo | at_hi
        done = (np.abs(r) <= tol) | active
        if np.all(done):
            res = np.where(active, 0.0, r)
            return HamiltonianMinimum(a, active, res, it)
        slope = np.maximum(hb.foc_slope(t, x, a, y, mu), floor)
        step = r / slope
        cand = np.clip(a - step, lo, hi)
        # halve the step while the residual magnitude does not decrease
        for _ in range(30):
            r_new = hb.foc(t, x, cand, y, mu, chi)
            worse = (np.abs(r_new) > np.abs(r)) & ~done & ~((cand <= lo) | (cand >= hi))
            if not np.any(worse):
                break
            step = np.where(worse, step / 2, step)
            cand = np.clip(a - step, lo, hi)
        a = np.where(done, a, cand)
    raise NoConvergence(f"Hamiltonian minimizer residual {np.max(np.abs(r)):.3e} after {max_iter} steps")


def lq_hamiltonian(R: float, B: float, box=None) -> HamiltonianBundle:
    """Quadratic cost ``R a^2`` with linear drift ``B a``."""
    return HamiltonianBundle(
        f1=lambda t, x, a, mu: R * a**2,
        b1=lambda t, x, a, mu: B * a,
        df1=lambda t, x, a, mu: 2 * R * a,
        db1=lambda t, x, a, mu: B + 0 * a,
        d2f1=lambda t, x, a, mu: 2 * R + 0 * a,
        d2b1=lambda t, x, a, mu: 0 * a,
        gamma=R, box=box,
    )
