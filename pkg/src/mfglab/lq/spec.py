"""Coefficient record of the scalar linear-quadratic game."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpec, NonConvex

COEFFICIENTS = ("A", "Abar", "B", "Bbar", "Q", "Qbar", "R", "Rbar", "Sbar", "QT", "QbarT")
INTERACTIONS = ("Abar", "Bbar", "Qbar", "Rbar", "Sbar", "QbarT")


@dataclass(frozen=True)
class LqSpec:
    """Scalar LQ game.

    Running cost ``Q x^2 + Qbar xbar^2 + R a^2 + Rbar abar^2 + Sbar x abar``,
    drift ``A x + Abar xbar + B a + Bbar abar``, terminal cost
    ``QT x^2 + QbarT xbar^2``, where bars denote population means of state
    and control.  The initial law is Gaussian with the given mean and
    standard deviation, or a point mass when ``mu0_std == 0``.
    """

    A: float = 0.1
    Abar: float = 0.2
    B: float = 1.0
    Bbar: float = 0.3
    Q: float = 1.0
    Qbar: float = 0.5
    R: float = 1.0
    Rbar: float = 0.2
    Sbar: float = 0.3
    QT: float = 1.0
    QbarT: float = 0.5
    sigma: float = 0.5
    T: float = 1.0
    mu0_mean: float = 1.0
    mu0_std: float = 0.5

    def __post_init__(self):
        for name in COEFFICIENTS + ("sigma", "T", "mu0_mean", "mu0_std"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InvalidSpec(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        if self.R == 0:
            raise InvalidSpec("R must be nonzero")
        if self.sigma <= 0:
            raise InvalidSpec("sigma must be positive")
        if self.T <= 0:
            raise InvalidSpec("T must be positive")
        if self.mu0_std < 0:
            raise InvalidSpec("mu0_std must be non-negative")

    @property
    def is_dirac(self) -> bool:
        return self.mu0_std == 0.0

    def check_nplayer(self, N: int) -> None:
        if N < 1:
            raise InvalidSpec(f"N must be >= 1, got {N}")
        if self.R + self.Rbar / N == 0:
            raise InvalidSpec(f"R + Rbar/N vanishes at N = {N}")

    def check_cooperative(self) -> None:
        if self.R + self.Rbar == 0:
            raise InvalidSpec("R + Rbar vanishes; cooperative mean control undefined")

    def replace(self, **changes) -> "LqSpec":
        return dataclasses.replace(self, **changes)

    def without_interaction(self) -> "LqSpec":
        return self.replace(**{k: 0.0 for k in INTERACTIONS})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LqSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidSpec(f"unknown LqSpec fields {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @classmethod
    def random(cls, rng: np.random.Generator, **fixed) -> "LqSpec":
        """Random well-posed spec with moderate coefficients (for tests)."""
        d = dict(
            A=rng.uniform(-0.5, 0.5), Abar=rng.uniform(-0.5, 0.5),
            B=rng.uniform(0.5, 1.5), Bbar=rng.uniform(-0.5, 0.5),
            Q=rng.uniform(0.1, 1.5), Qbar=rng.uniform(-0.5, 1.0),
            R=rng.uniform(0.5, 1.5), Rbar=rng.uniform(-0.3, 0.5),
            Sbar=rng.uniform(-0.5, 0.5), QT=rng.uniform(0.1, 1.5),
            QbarT=rng.uniform(-0.5, 1.0), sigma=rng.uniform(0.2, 1.0),
            T=rng.uniform(0.5, 1.0), mu0_mean=rng.uniform(-1, 1),
            mu0_std=rng.uniform(0.1, 1.0),
        )
        d.update(fixed)
        return cls(**d)


def price_impact_spec(h1_slope, h2_slope, c_quad, cX_quad, g_quad, sigma, T,
                      mu0_mean=1.0, mu0_std=0.0) -> LqSpec:
    """Linear-impact optimal execution as an LQ game.

    Trader ``i`` controls its trading rate ``a``; the running cost is
    ``c_quad a^2 + cX_quad x^2 + h2_slope a^2 - h1_slope x abar`` (own
    temporary impact plus permanent impact of the population's mean rate on
    the marked-to-market inventory) and the terminal penalty is
    ``g_quad x^2``.  The state drift is the trading rate itself.

    Mapping: ``R = c_quad + h2_slope``, ``Sbar = -h1_slope``, ``Q = cX_quad``,
    ``QT = g_quad``, ``B = 1``, all other coefficients zero.
    """
    for name, v in (("c_quad", c_quad), ("cX_quad", cX_quad), ("g_quad", g_quad)):
        if not v > 0:
            raise InvalidSpec(f"{name} must be strictly positive, got {v}")
    R = c_quad + h2_slope
    if not R > 0:
        raise NonConvex(f"temporary impact plus trading cost R = {R} is not positive")
    return LqSpec(A=0.0, Abar=0.0, B=1.0, Bbar=0.0, Q=cX_quad, Qbar=0.0, R=R, Rbar=0.0,
                  Sbar=-h1_slope, QT=g_quad, QbarT=0.0, sigma=sigma, T=T,
                  mu0_mean=mu0_mean, mu0_std=mu0_std)
