"""Distances, the theoretical rate table, slope fits and tail estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr, ndtri

from .errors import EmptySample, SizeLimit, UndefinedRegime

Z95 = float(stats.norm.ppf(0.975))


# ---------------------------------------------------------------- rate table

@dataclass(frozen=True)
class RateQuery:
    """Parameters of the piecewise rate ``r_{N,M,k,p}``."""

    N: int
    M: float
    k: float
    p: float = 2.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not self.M >= 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not (self.k > self.p > 0):
            raise ValueError(f"need k > p > 0, got k = {self.k}, p = {self.p}")

    @property
    def regime(self) -> int:
        M, k, p = self.M, self.k, self.p
        if p > M / 2 and k != 2 * p:
            return 1
        if p == M / 2 and k != 2 * p:
            return 2
        if M > 2 * p and k != M / (M - p):
            return 3
        raise UndefinedRegime(f"no rate regime for M = {M}, k = {k}, p = {p}")


def theoretical_rate(q: RateQuery | None = None, **kw) -> float:
    """Piecewise convergence rate of empirical measures.

    * ``p > M/2``, ``k != 2p``: ``N^{-1/2} + N^{-(k-p)/k}``
    * ``p = M/2``, ``k != 2p``: ``N^{-1/2} log(1+N) + N^{-(k-p)/k}``
    * ``M > 2p``, ``k != M/(M-p)``: ``N^{-2/M} + N^{-(k-p)/k}``

    Raises
    ------
    UndefinedRegime
        On the excluded boundary cases; never interpolated.
    """
    q = q if q is not None else RateQuery(**kw)
    N = float(q.N)
    moment = N ** (-(q.k - q.p) / q.k)
    regime = q.regime
    if regime == 1:
        return N**-0.5 + moment
    if regime == 2:
        return N**-0.5 * np.log1p(N) + moment
    return N ** (-2.0 / q.M) + moment


# ---------------------------------------------------------------- Wasserstein

@dataclass(frozen=True)
class Gaussian:
    """Analytic one-dimensional normal law."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be non-negative")


def _sample(a) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise EmptySample("empty sample")
    return a


def _cell_moments(u0, u1):
    """Integrals of ``z(u)`` and ``z(u)^2`` over ``[u0, u1]`` with ``z = Phi^{-1}``."""
    z0, z1 = ndtri(u0), ndtri(u1)

    def phi(z):
        return stats.norm.pdf(np.where(np.isfinite(z), z, 0.0)) * np.isfinite(z)

    def zphi(z):
        zf = np.where(np.isfinite(z), z, 0.0)
        return zf * stats.norm.pdf(zf)

    first = phi(z0) - phi(z1)
    second = (ndtr(z1) - zphi(z1)) - (ndtr(z0) - zphi(z0))
    return first, second


def _w2_sample_gaussian(a: np.ndarray, g: Gaussian) -> float:
    a = np.sort(a)
    n = a.size
    u = np.arange(n + 1) / n
    first, second = _cell_moments(u[:-1], u[1:])
    # integral over each cell of (a_i - m - s z)^2
    d = a - g.mean
    total = np.sum(d**2 / n - 2 * g.std * d * first + g.std**2 * second)
    return float(np.sqrt(max(total, 0.0)))


def _w2_gaussians(g1: Gaussian, g2: Gaussian, n_cells=10_000) -> float:
    # exact cell integrals of the quantile difference dm + ds z(u)
    u = np.arange(n_cells + 1) / n_cells
    first, second = _cell_moments(u[:-1], u[1:])
    dm, ds = g1.mean - g2.mean, g1.std - g2.std
    total = np.sum(dm**2 / n_cells + 2 * dm * ds * first + ds**2 * second)
    return float(np.sqrt(max(total, 0.0)))


def _w2_samples(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    # common refinement of the two quantile step functions
    n, m = a.size, b.size
    cuts = np.union1d(np.arange(n + 1) / n, np.arange(m + 1) / m)
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    ia = np.minimum((mid * n).astype(int), n - 1)
    ib = np.minimum((mid * m).astype(int), m - 1)
    return float(np.sqrt(np.sum(np.diff(cuts) * (a[ia] - b[ib]) ** 2)))


class QuantileReference:
    """Large equal-weight sample prepared for repeated W2 queries.

    The cumulative integrals of its quantile function and of its square are
    tabulated once, so the exact monotone-coupling distance to a small
    sample of size ``n`` costs ``O(n)`` regardless of the reference size.
    """

    def __init__(self, sample):
        s = np.sort(_sample(sample))
        self.sample = s
        self.size = s.size
        self._c1 = np.concatenate([[0.0], np.cumsum(s)]) / s.size
        self._c2 = np.concatenate([[0.0], np.cumsum(s * s)]) / s.size

    def _cumulative(self, table, values, u):
        pos = u * self.size
        j = np.minimum(np.floor(pos).astype(np.int64), self.size - 1)
        return table[j] + (pos - j) * values[j] / self.size

    def distances(self, samples) -> np.ndarray:
        """W2 from each sample along the last axis to the reference."""
        a = np.sort(np.asarray(samples, dtype=float), axis=-1)
        n = a.shape[-1]
        if n == 0:
            raise EmptySample("empty sample")
        u = np.arange(n + 1) / n
        i1 = np.diff(self._cumulative(self._c1, self.sample, u))
        i2 = np.diff(self._cumulative(self._c2, self.sample**2, u))
        total = np.sum(a * a / n - 2 * a * i1 + i2, axis=-1)
        return np.sqrt(np.maximum(total, 0.0))


def wasserstein2_1d(a, b) -> float:
    """Exact W2 distance between one-dimensional laws.

    Each argument is a sample (equal weights), a :class:`Gaussian` or, for
    ``b`` only, a :class:`QuantileReference`.
    Sample pairs use the monotone (quantile) coupling, refined to a common
    partition when sizes differ.  Gaussian arguments enter through exact
    per-cell integrals of the normal quantile function.
    """
    if isinstance(a, Gaussian) and isinstance(b, Gaussian):
        return _w2_gaussians(a, b)
    if isinstance(a, Gaussian):
        a, b = b, a
    a = _sample(a)
    if isinstance(b, QuantileReference):
        return float(b.distances(a))
    if isinstance(b, Gaussian):
        return _w2_sample_gaussian(a, b)
    return _w2_samples(a, _sample(b))


def wasserstein2_exact_small(a, b, max_size=64) -> float:
    """W2 between equal-size equal-weight point clouds by optimal assignment."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptySample("empty sample")
    if a.shape[0] != b.shape[0]:
        raise SizeLimit(f"sample sizes differ ({a.shape[0]} vs {b.shape[0]})")
    if a.shape[0] > max_size:
        raise SizeLimit(f"exact assignment limited to {max_size} points, got {a.shape[0]}")
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


# ---------------------------------------------------------------- fits and tails

@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(log N, log value)``."""

    log_n: np.ndarray
    log_value: np.ndarray
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    half_widths: np.ndarray | None = None

    def residuals(self) -> np.ndarray:
        return self.log_value - (self.intercept + self.slope * self.log_n)


def loglog_slope(ns, values, half_widths=None) -> SlopeFit:
    """Fit ``log value = intercept + slope * log N``.

    ``half_widths`` are confidence half-widths of the values, carried along
    (converted to log scale) for reporting.

    Raises
    ------
    ValueError
        Fewer than four points or non-positive values.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size < 4 or ns.size != values.size:
        raise ValueError("slope fits need at least four (N, value) pairs")
    if np.any(values <= 0) or np.any(ns <= 0):
        raise ValueError("log-log fit needs positive N and values")
    x, y = np.log(ns), np.log(values)
    res = stats.linregress(x, y)
    hw = None
    if half_widths is not None:
        hw = np.asarray(half_widths, dtype=float) / values
    return SlopeFit(x, y, float(res.slope), float(res.intercept), float(res.rvalue**2),
                    float(res.stderr), hw)


@dataclass(frozen=True)
class TailEstimate:
    """Exceedance probability ``P(sample > threshold)`` with a Wilson interval."""

    threshold: float
    count: int
    n: int
    estimate: float
    low: float
    high: float

    def separated_below(self, other: "TailEstimate") -> bool:
        """True when this interval lies strictly below ``other``'s."""
        return self.high < other.low


def empirical_tail(samples, threshold: float, confidence=0.95) -> TailEstimate:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise EmptySample("tail estimate on empty sample")
    k = int(np.count_nonzero(samples > threshold))
    n = samples.size
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return TailEstimate(float(threshold), k, n, k / n, float(ci.low), float(ci.high))


def mean_ci(samples, axis=None):
    """Mean and normal-approximation 95% half-width."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size if axis is None else samples.shape[axis]
    mean = samples.mean(axis=axis)
    half = Z95 * samples.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.full_like(mean, np.inf)
    return mean, half
