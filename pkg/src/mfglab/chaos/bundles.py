"""Coefficient bundles for the generic forward-backward particle solvers.

A bundle supplies the forward drift ``B(t, x, y, mu)``, the backward driver
``F(t, x, y, z, mu)`` and the terminal map ``G(x, mu)``, where ``mu`` is an
:class:`EmpiricalMeasure` of the joint (state, adjoint) sample.  All
callables act elementwise on arrays with particles on the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, InvalidSpec
from ..lq.cooperative import mfg_particle_system
from ..lq.spec import LqSpec, price_impact_spec


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal- or custom-weight sample of states (and optionally adjoints).

    Samples sit on the last axis; leading axes index independent measures
    (for example one per replication).
    """

    x: np.ndarray
    y: np.ndarray | None = None
    weights: np.ndarray | None = None

    def _avg(self, v):
        if self.weights is None:
            return np.mean(v, axis=-1, keepdims=True)
        w = self.weights / np.sum(self.weights, axis=-1, keepdims=True)
        return np.sum(w * v, axis=-1, keepdims=True)

    def mean_x(self):
        return self._avg(self.x)

    def mean_y(self):
        if self.y is None:
            raise ValueError("measure carries no adjoint marginal")
        return self._avg(self.y)

    def expect(self, fn):
        """Integral of ``fn(x, y)`` against the measure."""
        return self._avg(fn(self.x, self.y))


@dataclass(frozen=True)
class CoefficientBundle:
    """Scalar coefficient bundle (state, adjoint and noise dimension 1).

    Attributes
    ----------
    drift, driver, terminal : callables
    sigma : float
        Constant volatility.
    control : callable(t, x, y, mu) or None
        Equilibrium control map, used to report controls in clouds.
    uses_measure : bool
        False when no coefficient reads the measure; the regression basis
        then omits measure statistics.
    lipschitz : float
        User-asserted Lipschitz constant of the driver.
    growth : {"B2", "B2'"}
        Declared growth regime.
    x0_mean, x0_std : float
        Gaussian initial law (point mass when ``x0_std == 0``).
    """

    name: str
    drift: Callable
    driver: Callable
    terminal: Callable
    sigma: float
    T: float
    control: Callable | None = None
    uses_measure: bool = True
    lipschitz: float = 1.0
    growth: str = "B2"
    x0_mean: float = 0.0
    x0_std: float = 0.0
    dims: tuple = (1, 1, 1)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if tuple(self.dims) != (1, 1, 1):
            raise InvalidSpec("only scalar (state, adjoint, noise) bundles are supported")
        if not self.sigma > 0:
            raise InvalidSpec("sigma must be positive")
        if not self.T > 0:
            raise InvalidSpec("T must be positive")
        if self.x0_std < 0:
            raise InvalidSpec("x0_std must be non-negative")
        if self.growth not in ("B2", "B2'"):
            raise InvalidSpec(f"unknown growth regime {self.growth!r}")

    def check_shapes(self, n=5, seed=0):
        """Evaluate every callable on a random probe and verify shapes."""
        g = np.random.default_rng(seed)
        x, y, z = g.normal(size=(3, 2, n))
        mu = EmpiricalMeasure(x, y)
        for name, v in (("drift", self.drift(0.0, x, y, mu)),
                        ("driver", self.driver(0.0, x, y, z, mu)),
                        ("terminal", self.terminal(x, EmpiricalMeasure(x)))):
            if np.shape(v) != x.shape:
                raise InvalidSpec(f"{name} returned shape {np.shape(v)}, expected {x.shape}")


def lq_bundle(spec: LqSpec, name="lq") -> CoefficientBundle:
    """Adjoint system of the LQ mean field game with expectations replaced
    by empirical means of the particle system."""
    c = mfg_particle_system(spec)
    gain = -spec.B / (2 * spec.R)
    interacting = any(v != 0 for v in (c.bm, c.bn, c.fm, c.fn, c.gm))
    return CoefficientBundle(
        name=name,
        drift=lambda t, x, y, mu: c.bx * x + c.bm * mu.mean_x() + c.by * y + c.bn * mu.mean_y(),
        driver=lambda t, x, y, z, mu: c.fx * x + c.fm * mu.mean_x() + c.fy * y + c.fn * mu.mean_y(),
        terminal=lambda x, mu: c.gx * x + c.gm * mu.mean_x(),
        control=lambda t, x, y, mu: gain * y,
        sigma=spec.sigma, T=spec.T, uses_measure=interacting,
        lipschitz=float(max(abs(c.fx), abs(c.fy), abs(c.fn), abs(c.fm))),
        x0_mean=spec.mu0_mean, x0_std=spec.mu0_std,
        meta={"spec": spec, "system": c},
    )


def price_impact_bundle(h1_slope=0.5, h2_slope=0.0, c_quad=0.5, cX_quad=1.0, g_quad=1.0,
                        sigma=0.5, T=0.25, mu0_mean=1.0, mu0_std=0.0) -> CoefficientBundle:
    spec = price_impact_spec(h1_slope, h2_slope, c_quad, cX_quad, g_quad, sigma, T,
                             mu0_mean=mu0_mean, mu0_std=mu0_std)
    return lq_bundle(spec, name="price-impact")


def tanh_flocking_bundle(kappa=0.5, q=1.0, g=1.0, interaction=1.0, sigma=0.3, T=0.5,
                         x0_mean=0.5, x0_std=0.5) -> CoefficientBundle:
    """Mean reversion towards the crowd with a saturated control ``-tanh(y)``;
    state cost and terminal penalty on the distance to the crowd mean."""
    k = interaction

    def center(x, mu):
        return x - k * mu.mean_x() if k else x

    return CoefficientBundle(
        name="tanh-flocking",
        drift=lambda t, x, y, mu: -kappa * center(x, mu) - np.tanh(y),
        driver=lambda t, x, y, z, mu: q * center(x, mu),
        terminal=lambda x, mu: g * center(x, mu),
        control=lambda t, x, y, mu: -np.tanh(y),
        sigma=sigma, T=T, uses_measure=bool(k), lipschitz=float(max(q, kappa)),
        growth="B2'", x0_mean=x0_mean, x0_std=x0_std,
    )


def tanh_saturation_bundle(a=0.5, q=1.0, r=0.2, s=0.3, interaction=1.0, sigma=0.3, T=0.5,
                           x0_mean=0.5, x0_std=0.5) -> CoefficientBundle:
    """Saturated control plus saturated crowd attraction; bounded terminal map."""
    k = interaction
    return CoefficientBundle(
        name="tanh-saturation",
        drift=lambda t, x, y, mu: -np.tanh(y) + (a * k * np.tanh(mu.mean_x()) if k else 0 * x),
        driver=lambda t, x, y, z, mu: q * x + (r * k * mu.mean_y() if k else 0 * x),
        terminal=lambda x, mu: np.tanh(x) + (s * k * np.tanh(mu.mean_x()) if k else 0 * x),
        control=lambda t, x, y, mu: -np.tanh(y),
        sigma=sigma, T=T, uses_measure=bool(k), lipschitz=float(max(q, r)),
        growth="B2'", x0_mean=x0_mean, x0_std=x0_std,
    )


def _lq_default(**params):
    return lq_bundle(LqSpec(**params))


_REGISTRY: dict[str, Callable[..., CoefficientBundle]] = {
    "lq": _lq_default,
    "price-impact": price_impact_bundle,
    "tanh-flocking": tanh_flocking_bundle,
    "tanh-saturation": tanh_saturation_bundle,
}


def register_bundle(name: str, factory: Callable[..., CoefficientBundle]) -> None:
    if name in _REGISTRY:
        raise ValueError(f"bundle {name!r} already registered")
    _REGISTRY[name] = factory


def available_bundles() -> list[str]:
    return sorted(_REGISTRY)


def get_bundle(name: str, **params) -> CoefficientBundle:
    """Build a registered bundle; unknown names or parameters are errors."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown bundle {name!r}; available: {available_bundles()}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for bundle {name!r}: {exc}") from None
