"""Study configuration records."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..errors import ConfigError
from ..grid import TimeGrid
from ..chaos.bundles import get_bundle
from ..lq.spec import LqSpec, price_impact_spec

STUDIES = ("nash_gap", "offdiag", "concentration", "cooperative_gap", "master_gap",
           "price_impact", "fbsde")
PRICE_IMPACT_DEFAULTS = {"h1_slope": 0.5, "h2_slope": 0.0, "c_quad": 0.5, "cX_quad": 1.0,
                         "g_quad": 1.0, "sigma": 0.5, "T": 0.25, "mu0_mean": 1.0, "mu0_std": 0.0}
DEFAULT_N = (8, 16, 32, 64, 128, 256, 512)
# fields that never influence a result and so stay out of the hash
RUNTIME_FIELDS = ("out_dir",)


@dataclass(frozen=True)
class StudyConfig:
    """Everything a study needs; studies are pure functions of this record.

    Attributes
    ----------
    study : str
        One of :data:`STUDIES`.
    spec : LqSpec
        Game used by the closed-form path.
    bundle : str or None
        Registered coefficient bundle; selects the Picard path when set (for
        ``price_impact`` the bundle parameters are the impact parameters).
    bundle_params : tuple of (name, value)
    N_list : tuple of int
        Strictly increasing population sizes.
    replications : int
    n_steps : int
        Time steps of the simulation grid.
    noise_substeps : int
        Brownian increments are aggregated from this many finer ones, so a
        refined grid can reuse the same path.
    seed : int
    thresholds : tuple of float
        Tail thresholds, in units of the reference law's standard deviation
        when ``threshold_units == "std"``.
    eval_times : tuple of float or None
        Defaults to ``(0, T/2, T)``; every time must be a grid node.
    k_moment : float
        Moment order used by the theoretical rate overlays.
    reference_size : int
        Reference sample size for the law of the limiting control.
    law_particles : int
        Particles representing the law flow on the Picard path.
    chunk_size : int
        Replications per work unit.  On the Picard path a chunk is solved
        jointly, so the chunk size is part of the experiment.
    """

    study: str = "nash_gap"
    spec: LqSpec = field(default_factory=LqSpec)
    bundle: str | None = None
    bundle_params: tuple = ()
    N_list: tuple = DEFAULT_N
    replications: int = 200
    n_steps: int = 100
    noise_substeps: int = 1
    seed: int = 0
    thresholds: tuple = (0.2, 0.3, 0.4, 0.5)
    threshold_units: str = "std"
    eval_times: tuple | None = None
    k_moment: float = 8.0
    reference_size: int = 100_000
    law_particles: int = 2000
    picard_tol: float = 1e-6
    picard_max_iter: int = 300
    picard_degree: int = 2
    chunk_size: int = 25
    out_dir: str | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {STUDIES}")
        Ns = tuple(int(n) for n in self.N_list)
        object.__setattr__(self, "N_list", Ns)
        object.__setattr__(self, "bundle_params", tuple(sorted((str(k), float(v)) for k, v in self.bundle_params)))
        object.__setattr__(self, "thresholds", tuple(float(a) for a in self.thresholds))
        if self.eval_times is not None:
            object.__setattr__(self, "eval_times", tuple(float(t) for t in self.eval_times))
        if not Ns or any(n < 1 for n in Ns) or any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ConfigError(f"N_list must be strictly increasing positive integers, got {Ns}")
        for name in ("replications", "n_steps", "noise_substeps", "reference_size", "law_particles",
                     "chunk_size", "picard_max_iter", "picard_degree"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.threshold_units not in ("std", "absolute"):
            raise ConfigError("threshold_units must be 'std' or 'absolute'")
        if any(a <= 0 for a in self.thresholds):
            raise ConfigError("thresholds must be positive")
        if not self.picard_tol > 0:
            raise ConfigError("picard_tol must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    # ------------------------------------------------------------------ derived

    @property
    def horizon(self) -> float:
        if self.study == "price_impact":
            return self.impact_spec().T
        if self.bundle is not None:
            return self.make_bundle().T
        return self.spec.T

    def make_bundle(self):
        return get_bundle(self.bundle, **dict(self.bundle_params))

    def impact_spec(self) -> LqSpec:
        """Game of the price-impact study, built from the impact parameters."""
        params = {**PRICE_IMPACT_DEFAULTS, **dict(self.bundle_params)}
        unknown = set(params) - set(PRICE_IMPACT_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown price-impact parameters {sorted(unknown)}")
        return price_impact_spec(**params)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.n_steps)

    def eval_nodes(self) -> np.ndarray:
        """Grid indices of the evaluation times.

        Raises
        ------
        ConfigError
            A requested time is not a grid node.
        """
        grid = self.grid
        times = self.eval_times if self.eval_times is not None else (0.0, grid.T / 2, grid.T)
        nodes = []
        for t in times:
            k = int(round(t / grid.dt))
            if not (0 <= k <= grid.n_steps) or abs(grid.times[k] - t) > 1e-9 * max(1.0, grid.T):
                raise ConfigError(f"evaluation time {t} is not a node of {grid}")
            nodes.append(k)
        if len(set(nodes)) != len(nodes):
            raise ConfigError("evaluation times must be distinct")
        return np.array(nodes, dtype=int)

    def replace(self, **changes) -> "StudyConfig":
        return replace(self, **changes)

    # ------------------------------------------------------------------ serialization

    def as_dict(self) -> dict:
        """Flat ``name -> value`` mapping; the spec enters as ``spec.<field>``."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "spec":
                out.update({f"spec.{k}": x for k, x in v.as_dict().items()})
            elif f.name == "bundle_params":
                out.update({f"bundle.{k}": x for k, x in v})
            else:
                out[f.name] = v
        return out

    def canonical(self) -> str:
        """Deterministic text form of every result-relevant field."""
        items = {k: v for k, v in self.as_dict().items() if k not in RUNTIME_FIELDS}
        return "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(items.items()))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    return repr(v)


def default_config(study: str, **overrides) -> StudyConfig:
    """Study-specific defaults, then ``overrides``."""
    base = {}
    if study == "concentration":
        base = {"spec": LqSpec(T=0.3, mu0_std=0.0), "N_list": (16, 32, 64, 128, 256),
                "replications": 400, "eval_times": (0.15, 0.3)}
    elif study == "master_gap":
        base = {"N_list": (16, 32, 64, 128, 256), "replications": 400}
    elif study == "price_impact":
        base = {"bundle_params": tuple(PRICE_IMPACT_DEFAULTS.items())}
    elif study == "fbsde":
        base = {"bundle": "lq", "bundle_params": (("T", 0.5), ("mu0_std", 0.0)), "N_list": (1000,),
                "replications": 1, "n_steps": 50, "chunk_size": 1}
    elif study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}; choose from {STUDIES}")
    base.update(overrides)
    return StudyConfig(study=study, **base)


__all__ = ["StudyConfig", "STUDIES", "PRICE_IMPACT_DEFAULTS", "default_config"]
