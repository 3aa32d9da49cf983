"""Exposure distribution families and the least-squares intervention transform.

Every family exposes the same surface at a fixed covariate value: pdf, cdf,
quantile, moments, sampling, truncated means, and (where it exists) the
cumulant generating function.  On top of that surface this module implements
the intervention transform induced by the least-squares contrast v(x) = x:
a distribution f with mean mu and finite variance sigma^2 > 0 is mapped to

    f~(x) = F(x) {1 - F(x)} {E[X | X > x] - E[X | X <= x]} / sigma^2,

which is itself a density, vanishes at the support endpoints, and describes
the exposure shift whose mean-outcome difference the least-squares functional
targets.  Two independent routes are provided: ``ls_intervention_curve``
composes the displayed formula numerically from the cdf and truncated means,
while ``ls_intervention_family`` returns the closed-form image of the family
(normal is a fixed point; gamma/chi-squared/beta/beta-prime shift their shape
parameters).  On the cumulant scale the same transform acts as

    K~(t) = K(t) + log[ {K'(t) - K'(0)} / (t K''(0)) ],

with the second term extended by continuity to 0 at t = 0.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special, stats

from .errors import (
    DomainError,
    NoClosedFormError,
    UnsupportedDistributionError,
    ValidationError,
)

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DistributionFamily(abc.ABC):
    """Common surface for exposure distributions at a fixed covariate value."""

    @abc.abstractmethod
    def support(self) -> tuple[float, float]: ...

    @abc.abstractmethod
    def pdf(self, x): ...

    @abc.abstractmethod
    def cdf(self, x): ...

    def sf(self, x):
        """Survival function 1 - F(x); overridden where a precise tail exists."""
        return 1.0 - np.asarray(self.cdf(x), dtype=float)

    @abc.abstractmethod
    def ppf(self, q): ...

    @abc.abstractmethod
    def mean(self) -> float: ...

    @abc.abstractmethod
    def variance(self) -> float: ...

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @abc.abstractmethod
    def log_density_slope(self, x):
        """d/dx log f(x), defined on the interior of the support."""

    def truncated_means(self, x):
        """Pair (E[X | X <= x], E[X | X > x]); requires 0 < F(x) < 1."""
        raise NoClosedFormError(
            f"{type(self).__name__} has no truncated-mean implementation"
        )

    def reciprocal_mean(self) -> float:
        raise NoClosedFormError(
            f"{type(self).__name__} has no closed-form E[1/X]"
        )

    def cgf(self, t: float) -> float:
        raise NoClosedFormError(
            f"{type(self).__name__} has no closed-form cumulant function"
        )

    def cgf_slope(self, t: float) -> float:
        raise NoClosedFormError(
            f"{type(self).__name__} has no closed-form cumulant function"
        )

    def quad_breakpoints(self) -> tuple[float, ...]:
        """Interior points where the pdf is not smooth (for quadrature splits)."""
        return ()

    def quantile_range(self, tail: float = 1e-9) -> tuple[float, float]:
        """Support truncated to quantiles [tail, 1 - tail] where infinite."""
        lo, hi = self.support()
        if not np.isfinite(lo):
            lo = float(self.ppf(tail))
        if not np.isfinite(hi):
            hi = float(self.ppf(1.0 - tail))
        return float(lo), float(hi)

    def _check_truncation_point(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        if not np.all(np.isfinite(x)) or np.any(x <= lo) or np.any(x >= hi):
            raise DomainError("truncation point must lie inside the open support")
        F = np.asarray(self.cdf(x), dtype=float)
        S = np.asarray(self.sf(x), dtype=float)
        if np.any(F <= 0.0) or np.any(S <= 0.0):
            raise DomainError(
                "truncation point carries no mass on one side (F(x) is 0 or 1)"
            )
        return F


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be positive and finite, got {value}")
    return value


@lru_cache(maxsize=None)
def _frozen(family: str, *params: float):
    return getattr(stats, family)(*params)


@dataclass(frozen=True)
class Normal(DistributionFamily):
    """Normal law parameterized by mean and variance."""

    mean_value: float
    variance_value: float

    def __post_init__(self):
        object.__setattr__(self, "mean_value", float(self.mean_value))
        object.__setattr__(self, "variance_value", _positive("variance", self.variance_value))
        if not np.isfinite(self.mean_value):
            raise ValidationError("mean must be finite")

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance_value))

    def support(self):
        return (-np.inf, np.inf)

    def pdf(self, x):
        a = (np.asarray(x, dtype=float) - self.mean_value) / self.sd
        return np.exp(-0.5 * a * a - _LOG_SQRT_2PI) / self.sd

    def cdf(self, x):
        a = (np.asarray(x, dtype=float) - self.mean_value) / self.sd
        return special.ndtr(a)

    def sf(self, x):
        a = (np.asarray(x, dtype=float) - self.mean_value) / self.sd
        return special.ndtr(-a)

    def ppf(self, q):
        return self.mean_value + self.sd * special.ndtri(np.asarray(q, dtype=float))

    def mean(self):
        return self.mean_value

    def variance(self):
        return self.variance_value

    def sample(self, rng, size):
        return rng.normal(self.mean_value, self.sd, size)

    def log_density_slope(self, x):
        return -(np.asarray(x, dtype=float) - self.mean_value) / self.variance_value

    def truncated_means(self, x):
        self._check_truncation_point(x)
        a = (np.asarray(x, dtype=float) - self.mean_value) / self.sd
        logphi = -0.5 * a * a - _LOG_SQRT_2PI
        lower = self.mean_value - self.sd * np.exp(logphi - special.log_ndtr(a))
        upper = self.mean_value + self.sd * np.exp(logphi - special.log_ndtr(-a))
        return lower, upper

    def reciprocal_mean(self):
        """Cauchy principal value of E[1/X].

        The support crosses zero, so the absolute integral diverges; the
        symmetric-limit value is sqrt(2)/sd * D(mean / (sqrt(2) sd)) with D
        the Dawson integral.
        """
        s = self.sd
        return float(np.sqrt(2.0) / s * special.dawsn(self.mean_value / (np.sqrt(2.0) * s)))

    def cgf(self, t):
        t = float(t)
        return self.mean_value * t + 0.5 * self.variance_value * t * t

    def cgf_slope(self, t):
        return self.mean_value + self.variance_value * float(t)


@dataclass(frozen=True)
class Gamma(DistributionFamily):
    """Gamma law with shape/rate parameterization."""

    shape: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def _dist(self):
        return _frozen("gamma", self.shape, 0.0, 1.0 / self.rate)

    def support(self):
        return (0.0, np.inf)

    def pdf(self, x):
        return self._dist().pdf(np.asarray(x, dtype=float))

    def cdf(self, x):
        return special.gammainc(self.shape, self.rate * np.asarray(x, dtype=float))

    def sf(self, x):
        return special.gammaincc(self.shape, self.rate * np.asarray(x, dtype=float))

    def ppf(self, q):
        return self._dist().ppf(np.asarray(q, dtype=float))

    def mean(self):
        return self.shape / self.rate

    def variance(self):
        return self.shape / self.rate**2

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def log_density_slope(self, x):
        x = np.asarray(x, dtype=float)
        return (self.shape - 1.0) / x - self.rate

    def truncated_means(self, x):
        self._check_truncation_point(x)
        s = self.rate * np.asarray(x, dtype=float)
        mu = self.mean()
        lower = mu * special.gammainc(self.shape + 1.0, s) / special.gammainc(self.shape, s)
        upper = mu * special.gammaincc(self.shape + 1.0, s) / special.gammaincc(self.shape, s)
        return lower, upper

    def reciprocal_mean(self):
        if self.shape <= 1.0:
            raise DomainError("E[1/X] diverges for gamma shape <= 1")
        return self.rate / (self.shape - 1.0)

    def cgf(self, t):
        t = float(t)
        if t >= self.rate:
            raise DomainError(f"cumulant function defined for t < rate = {self.rate}")
        return -self.shape * np.log1p(-t / self.rate)

    def cgf_slope(self, t):
        t = float(t)
        if t >= self.rate:
            raise DomainError(f"cumulant function defined for t < rate = {self.rate}")
        return self.shape / (self.rate - t)


@dataclass(frozen=True)
class ChiSquared(DistributionFamily):
    """Chi-squared law; behaves as Gamma(df/2, 1/2)."""

    df: float

    def __post_init__(self):
        object.__setattr__(self, "df", _positive("df", self.df))

    def _gamma(self) -> Gamma:
        return Gamma(shape=self.df / 2.0, rate=0.5)

    def support(self):
        return (0.0, np.inf)

    def pdf(self, x):
        return self._gamma().pdf(x)

    def cdf(self, x):
        return self._gamma().cdf(x)

    def sf(self, x):
        return self._gamma().sf(x)

    def ppf(self, q):
        return self._gamma().ppf(q)

    def mean(self):
        return self.df

    def variance(self):
        return 2.0 * self.df

    def sample(self, rng, size):
        return rng.chisquare(self.df, size)

    def log_density_slope(self, x):
        return self._gamma().log_density_slope(x)

    def truncated_means(self, x):
        return self._gamma().truncated_means(x)

    def reciprocal_mean(self):
        if self.df <= 2.0:
            raise DomainError("E[1/X] diverges for chi-squared df <= 2")
        return 1.0 / (self.df - 2.0)

    def cgf(self, t):
        return self._gamma().cgf(t)

    def cgf_slope(self, t):
        return self._gamma().cgf_slope(t)


@dataclass(frozen=True)
class Beta(DistributionFamily):
    """Beta law on (0, 1)."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _positive("a", self.a))
        object.__setattr__(self, "b", _positive("b", self.b))

    def _dist(self):
        return _frozen("beta", self.a, self.b)

    def support(self):
        return (0.0, 1.0)

    def pdf(self, x):
        return self._dist().pdf(np.asarray(x, dtype=float))

    def cdf(self, x):
        return special.betainc(self.a, self.b, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def sf(self, x):
        return special.betaincc(self.a, self.b, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def ppf(self, q):
        return self._dist().ppf(np.asarray(q, dtype=float))

    def mean(self):
        return self.a / (self.a + self.b)

    def variance(self):
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))

    def sample(self, rng, size):
        return rng.beta(self.a, self.b, size)

    def log_density_slope(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a - 1.0) / x - (self.b - 1.0) / (1.0 - x)

    def truncated_means(self, x):
        self._check_truncation_point(x)
        x = np.asarray(x, dtype=float)
        mu = self.mean()
        lower = mu * special.betainc(self.a + 1.0, self.b, x) / special.betainc(self.a, self.b, x)
        upper = mu * special.betaincc(self.a + 1.0, self.b, x) / special.betaincc(self.a, self.b, x)
        return lower, upper

    def reciprocal_mean(self):
        if self.a <= 1.0:
            raise DomainError("E[1/X] diverges for beta a <= 1")
        return (self.a + self.b - 1.0) / (self.a - 1.0)


@dataclass(frozen=True)
class BetaPrime(DistributionFamily):
    """Beta-prime law on (0, inf); mean needs b > 1, variance b > 2."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _positive("a", self.a))
        object.__setattr__(self, "b", _positive("b", self.b))

    def _dist(self):
        return _frozen("betaprime", self.a, self.b)

    def support(self):
        return (0.0, np.inf)

    def pdf(self, x):
        return self._dist().pdf(np.asarray(x, dtype=float))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.betainc(self.a, self.b, x / (1.0 + x))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return special.betaincc(self.a, self.b, x / (1.0 + x))

    def ppf(self, q):
        return self._dist().ppf(np.asarray(q, dtype=float))

    def mean(self):
        if self.b <= 1.0:
            raise UnsupportedDistributionError("beta-prime mean needs b > 1")
        return self.a / (self.b - 1.0)

    def variance(self):
        if self.b <= 2.0:
            raise UnsupportedDistributionError("beta-prime variance needs b > 2")
        return self.a * (self.a + self.b - 1.0) / ((self.b - 2.0) * (self.b - 1.0) ** 2)

    def sample(self, rng, size):
        return rng.gamma(self.a, 1.0, size) / rng.gamma(self.b, 1.0, size)

    def log_density_slope(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a - 1.0) / x - (self.a + self.b) / (1.0 + x)

    def truncated_means(self, x):
        if self.b <= 1.0:
            raise UnsupportedDistributionError(
                "beta-prime upper truncated mean diverges for b <= 1"
            )
        self._check_truncation_point(x)
        x = np.asarray(x, dtype=float)
        u = x / (1.0 + x)
        mu = self.mean()
        lower = mu * special.betainc(self.a + 1.0, self.b - 1.0, u) / special.betainc(self.a, self.b, u)
        upper = mu * special.betaincc(self.a + 1.0, self.b - 1.0, u) / special.betaincc(self.a, self.b, u)
        return lower, upper

    def reciprocal_mean(self):
        if self.a <= 1.0:
            raise DomainError("E[1/X] diverges for beta-prime a <= 1")
        return self.b / (self.a - 1.0)


@dataclass(frozen=True)
class AsymmetricLaplace(DistributionFamily):
    """Two-sided exponential with asymmetry p, scale sigma, center x0.

    Density p(1-p)/sigma * exp(-{(x - x0)/sigma} [1{x > x0} - p]); the mass
    below the center is 1 - p.  Both tails are memoryless, which gives all
    truncated means in closed form.
    """

    asymmetry: float
    scale: float
    center: float

    def __post_init__(self):
        p = float(self.asymmetry)
        if not (0.0 < p < 1.0):
            raise ValidationError(f"asymmetry must lie in (0, 1), got {p}")
        object.__setattr__(self, "asymmetry", p)
        object.__setattr__(self, "scale", _positive("scale", self.scale))
        if not np.isfinite(self.center):
            raise ValidationError("center must be finite")
        object.__setattr__(self, "center", float(self.center))

    def support(self):
        return (-np.inf, np.inf)

    def pdf(self, x):
        p, s = self.asymmetry, self.scale
        u = np.asarray(x, dtype=float) - self.center
        expo = np.where(u > 0.0, -u * (1.0 - p), u * p) / s
        return p * (1.0 - p) / s * np.exp(expo)

    def cdf(self, x):
        p, s = self.asymmetry, self.scale
        u = np.asarray(x, dtype=float) - self.center
        lo = (1.0 - p) * np.exp(np.minimum(u, 0.0) * p / s)
        hi = 1.0 - p * np.exp(-np.maximum(u, 0.0) * (1.0 - p) / s)
        return np.where(u <= 0.0, lo, hi)

    def sf(self, x):
        p, s = self.asymmetry, self.scale
        u = np.asarray(x, dtype=float) - self.center
        lo = 1.0 - (1.0 - p) * np.exp(np.minimum(u, 0.0) * p / s)
        hi = p * np.exp(-np.maximum(u, 0.0) * (1.0 - p) / s)
        return np.where(u <= 0.0, lo, hi)

    def ppf(self, q):
        p, s = self.asymmetry, self.scale
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            lo = self.center + s / p * np.log(q / (1.0 - p))
            hi = self.center - s / (1.0 - p) * np.log((1.0 - q) / p)
        return np.where(q <= 1.0 - p, lo, hi)

    def mean(self):
        p = self.asymmetry
        return self.center + self.scale * (2.0 * p - 1.0) / (p * (1.0 - p))

    def variance(self):
        p = self.asymmetry
        return self.scale**2 * (1.0 / p**2 + 1.0 / (1.0 - p) ** 2)

    def sample(self, rng, size):
        return np.asarray(self.ppf(rng.random(size)))

    def log_density_slope(self, x):
        """Piecewise constant slope; at the center the left value is returned."""
        p, s = self.asymmetry, self.scale
        u = np.asarray(x, dtype=float) - self.center
        return np.where(u > 0.0, -(1.0 - p), p) / s

    def truncated_means(self, x):
        self._check_truncation_point(x)
        p, s = self.asymmetry, self.scale
        x = np.asarray(x, dtype=float)
        F = np.asarray(self.cdf(x))
        mu = self.mean()
        left = x - s / p           # E[X | X <= x] on the lower tail
        right = x + s / (1.0 - p)  # E[X | X > x] on the upper tail
        below = x <= self.center
        lower = np.where(below, left, (mu - (1.0 - F) * right) / F)
        upper = np.where(below, (mu - F * left) / (1.0 - F), right)
        return lower, upper

    def quad_breakpoints(self):
        return (self.center,)

    def cgf(self, t):
        p, s = self.asymmetry, self.scale
        t = float(t)
        if not (-p / s < t < (1.0 - p) / s):
            raise DomainError("cumulant function defined for -p/scale < t < (1-p)/scale")
        return (
            t * self.center
            + np.log(p)
            + np.log(1.0 - p)
            - np.log(p + s * t)
            - np.log(1.0 - p - s * t)
        )

    def cgf_slope(self, t):
        p, s = self.asymmetry, self.scale
        t = float(t)
        if not (-p / s < t < (1.0 - p) / s):
            raise DomainError("cumulant function defined for -p/scale < t < (1-p)/scale")
        return self.center - s / (p + s * t) + s / (1.0 - p - s * t)


@dataclass(frozen=True, eq=False)
class Empirical(DistributionFamily):
    """Grid-backed density: monotone-cubic cdf interpolation over samples.

    The supplied values are normalized to unit mass; pdf and cdf come from
    the same interpolant, so they stay mutually consistent.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 4:
            raise ValidationError("grid and values must be equal-length vectors (>= 4 points)")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise ValidationError("grid and values must be finite")
        if np.any(np.diff(grid) <= 0.0):
            raise ValidationError("grid must be strictly increasing")
        if np.any(values < 0.0):
            raise ValidationError("density values must be nonnegative")
        raw_cdf = integrate.cumulative_trapezoid(values, grid, initial=0.0)
        mass = raw_cdf[-1]
        if mass <= 0.0:
            raise ValidationError("density values carry no mass")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values / mass)
        cdf_interp = interpolate.PchipInterpolator(grid, raw_cdf / mass)
        object.__setattr__(self, "_cdf_interp", cdf_interp)
        object.__setattr__(self, "_pdf_interp", cdf_interp.derivative())
        fine = np.linspace(grid[0], grid[-1], 8 * grid.size + 1)
        object.__setattr__(self, "_fine_grid", fine)
        object.__setattr__(self, "_fine_cdf", np.clip(cdf_interp(fine), 0.0, 1.0))
        # 3-point Gauss-Legendre per segment integrates the interpolant's
        # moments exactly (integrands are at most quartic polynomials), so
        # mean, variance, cdf, and truncated means stay mutually consistent
        nodes, weights = np.polynomial.legendre.leggauss(3)
        half = 0.5 * np.diff(grid)
        mid = 0.5 * (grid[:-1] + grid[1:])
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        w = half[:, None] * weights[None, :]
        dens = np.maximum(cdf_interp.derivative()(pts), 0.0)
        seg_m1 = (w * pts * dens).sum(axis=1)
        seg_m2 = (w * pts**2 * dens).sum(axis=1)
        cum_m1 = np.concatenate(([0.0], np.cumsum(seg_m1)))
        object.__setattr__(self, "_cum_m1", cum_m1)
        object.__setattr__(self, "_mean", float(seg_m1.sum()))
        object.__setattr__(self, "_m2", float(seg_m2.sum()))
        object.__setattr__(self, "_gl_nodes", nodes)
        object.__setattr__(self, "_gl_weights", weights)

    def support(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        inside = (x >= lo) & (x <= hi)
        out = np.zeros_like(x, dtype=float)
        out[inside] = np.maximum(self._pdf_interp(x[inside]), 0.0)
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        inner = np.clip(self._cdf_interp(np.clip(x, lo, hi)), 0.0, 1.0)
        return np.where(x < lo, 0.0, np.where(x > hi, 1.0, inner))

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0.0) | (q > 1.0)):
            raise DomainError("quantile levels must lie in [0, 1]")
        return np.interp(q, self._fine_cdf, self._fine_grid)

    def mean(self):
        return self._mean

    def variance(self):
        return self._m2 - self._mean**2

    def sample(self, rng, size):
        return np.asarray(self.ppf(rng.random(size)))

    def log_density_slope(self, x):
        x = np.asarray(x, dtype=float)
        dens = np.asarray(self.pdf(x))
        if np.any(dens <= 0.0):
            raise DomainError("log-density slope undefined where the density vanishes")
        return np.asarray(self._cdf_interp.derivative(2)(x)) / dens

    def _partial_first_moment(self, x: np.ndarray) -> np.ndarray:
        """Exact first moment of the interpolant below each x."""
        seg = np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, self.grid.size - 2)
        a = self.grid[seg]
        half = 0.5 * (x - a)
        mid = 0.5 * (x + a)
        pts = mid[:, None] + half[:, None] * self._gl_nodes[None, :]
        w = half[:, None] * self._gl_weights[None, :]
        dens = np.maximum(self._pdf_interp(pts), 0.0)
        return self._cum_m1[seg] + (w * pts * dens).sum(axis=1)

    def truncated_means(self, x):
        self._check_truncation_point(x)
        x = np.asarray(x, dtype=float)
        part = self._partial_first_moment(np.atleast_1d(x)).reshape(x.shape)
        F = np.asarray(self.cdf(x))
        lower = part / F
        upper = (self._mean - part) / (1.0 - F)
        if lower.ndim == 0:
            return float(lower), float(upper)
        return lower, upper


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """A density tabulated on an increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 3:
            raise ValidationError("curve needs matching grid/value vectors (>= 3 points)")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise ValidationError("curve grid and values must be finite")
        if np.any(np.diff(grid) <= 0.0):
            raise ValidationError("curve grid must be strictly increasing")
        if np.any(values < 0.0):
            raise ValidationError("curve values must be nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def interp(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values, left=0.0, right=0.0)

    def sup_distance(self, other) -> float:
        """Largest pointwise gap on this curve's grid; other is a curve or callable."""
        if isinstance(other, DensityCurve):
            reference = other.interp(self.grid)
        else:
            reference = np.asarray(other(self.grid), dtype=float)
        return float(np.max(np.abs(self.values - reference)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,density\n")
            for xi, vi in zip(self.grid, self.values):
                fh.write(f"{float(xi)!r},{float(vi)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "DensityCurve":
        arr = np.genfromtxt(path, delimiter=",", skip_header=1)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError(f"{path}: expected two columns x,density")
        return cls(grid=arr[:, 0], values=arr[:, 1])


def mass_grid(f: DistributionFamily, n_points: int = 2001, tail: float = 1e-9) -> np.ndarray:
    """Mass-adaptive grid: quantile, uniform, and geometric nodes merged.

    Quantile nodes track the mass (fat tails stay covered), uniform nodes cap
    the absolute spacing (light tails stay resolved), and geometric nodes from
    the median outward cap the relative spacing (power-law curvature on wide
    unbounded ranges stays resolved).
    """
    if n_points < 8:
        raise ValidationError("n_points too small for a useful grid")
    lo, hi = f.quantile_range(tail)
    probs = np.linspace(f.cdf(lo), f.cdf(hi), n_points)
    quantile_part = np.asarray(f.ppf(probs), dtype=float)
    uniform_part = np.linspace(lo, hi, n_points)
    pieces = [quantile_part, uniform_part, np.asarray(f.quad_breakpoints(), dtype=float)]
    lo_sup, hi_sup = f.support()
    anchor = float(np.clip(f.ppf(0.5), lo, hi))
    n_geo = n_points // 2
    if not np.isfinite(hi_sup) and hi > anchor:
        radii = np.geomspace((hi - anchor) * 1e-6, hi - anchor, n_geo)
        pieces.append(anchor + radii)
    if not np.isfinite(lo_sup) and lo < anchor:
        radii = np.geomspace((anchor - lo) * 1e-6, anchor - lo, n_geo)
        pieces.append(anchor - radii)
    grid = np.unique(np.concatenate(pieces))
    grid = grid[(grid >= lo) & (grid <= hi)]
    # de-duplicate to strict ascent in float precision
    keep = np.concatenate([[True], np.diff(grid) > 0.0])
    return grid[keep]


def tail_cutoff(value_at, anchor: float, start: float, tol: float = 1e-7,
                growth: float = 1.4, max_steps: int = 400) -> float:
    """Push a cutoff outward until the mass beyond it is negligible.

    ``value_at`` evaluates the density being truncated.  The remaining mass is
    estimated by a local power-law fit in the distance from ``anchor``, which
    is conservative for sub-polynomial (e.g. exponential) tails.
    """
    x = float(start)
    r = x - anchor
    if r == 0.0:
        return x
    fx = float(value_at(x))
    if fx <= 0.0:
        return x
    for _ in range(max_steps):
        x2 = anchor + r * growth
        f2 = float(value_at(x2))
        if f2 <= 0.0:
            return x2
        k = -(np.log(f2) - np.log(fx)) / np.log(growth)
        remaining = f2 * abs(r) * growth / max(k - 1.0, 0.1)
        x, r, fx = x2, r * growth, f2
        if remaining < tol:
            return x
    return x


def extended_mass_grid(f: DistributionFamily, value_at, n_points: int = 2001,
                       tail: float = 1e-9, tail_tol: float = 1e-7) -> np.ndarray:
    """mass_grid for f, extended so that ``value_at`` is also mass-covered.

    Needed when the transformed density has fatter tails than f itself
    (beta-prime shifts tail weight down by two powers).
    """
    base = mass_grid(f, n_points=n_points, tail=tail)
    lo_sup, hi_sup = f.support()
    anchor = float(np.clip(f.ppf(0.5), base[0], base[-1]))
    pieces = [base]
    n_ext = max(64, n_points // 8)
    if not np.isfinite(hi_sup):
        hi_ext = tail_cutoff(value_at, anchor, base[-1], tol=tail_tol)
        if hi_ext > base[-1] * (1.0 + 1e-12) + 1e-12:
            radii = np.geomspace(base[-1] - anchor, hi_ext - anchor, n_ext)
            pieces.append(anchor + radii[1:])
    if not np.isfinite(lo_sup):
        lo_ext = tail_cutoff(value_at, anchor, base[0], tol=tail_tol)
        if lo_ext < base[0] - 1e-12:
            radii = np.geomspace(anchor - base[0], anchor - lo_ext, n_ext)
            pieces.append(anchor - radii[1:])
    grid = np.unique(np.concatenate(pieces))
    keep = np.concatenate([[True], np.diff(grid) > 0.0])
    return grid[keep]


def gauss2_mass(value_fn, grid: np.ndarray) -> float:
    """Composite two-point Gauss integral of a vectorized function over grid.

    Matches Simpson's order but never pairs intervals, so sharply nonuniform
    spacing (tail-extension junctions) cannot degrade it.
    """
    a = grid[:-1]
    b = grid[1:]
    mid = 0.5 * (a + b)
    off = 0.5 * (b - a) / np.sqrt(3.0)
    vals = np.asarray(value_fn(np.concatenate([mid - off, mid + off])), dtype=float)
    left, right = vals[: a.size], vals[a.size:]
    return float(np.sum(0.5 * (b - a) * (left + right)))


def ls_intervention_pdf(f: DistributionFamily, x):
    """Pointwise intervention density F(x) S(x) (upper - lower truncated mean)/var."""
    var = f.variance()
    if not np.isfinite(var) or var <= 0.0:
        raise UnsupportedDistributionError("transform needs a finite positive variance")
    x = np.asarray(x, dtype=float)
    F = np.asarray(f.cdf(x), dtype=float)
    S = np.asarray(f.sf(x), dtype=float)
    out = np.zeros_like(F)
    interior = (F > 0.0) & (S > 0.0)
    if np.any(interior):
        xi = x[interior]
        lower, upper = f.truncated_means(xi)
        out[interior] = F[interior] * S[interior] * (np.asarray(upper) - np.asarray(lower)) / var
    # the truncated-mean gap is strictly positive, so any negative value here
    # is floating-point cancellation in a vanishing tail
    return np.maximum(out, 0.0)


def ls_intervention_curve(
    f: DistributionFamily, n_points: int = 2001, tail: float = 1e-9
) -> DensityCurve:
    """Numeric route of the transform: tabulate the displayed formula.

    Validates that the result integrates to one within 1e-6 on the grid.
    """
    try:
        f.mean()
        var = f.variance()
    except DomainError as exc:
        raise UnsupportedDistributionError(str(exc)) from exc
    if not np.isfinite(var) or var <= 0.0:
        raise UnsupportedDistributionError("transform needs a finite positive variance")

    def value_at(x):
        return ls_intervention_pdf(f, np.array([x]))[0]

    grid = extended_mass_grid(f, value_at, n_points=n_points, tail=tail)
    values = ls_intervention_pdf(f, grid)
    mass = gauss2_mass(lambda x: ls_intervention_pdf(f, x), grid)
    if abs(mass - 1.0) > 1e-6:
        raise UnsupportedDistributionError(
            f"transformed curve mass {mass:.8f} deviates from 1 beyond 1e-6"
        )
    return DensityCurve(grid=grid, values=values)


def ls_intervention_family(f: DistributionFamily) -> DistributionFamily:
    """Closed-form route of the transform: the image family, where one exists.

    Normal maps to itself; Gamma(shape, rate) to Gamma(shape + 1, rate);
    ChiSquared(df) to ChiSquared(df + 2); Beta(a, b) to Beta(a + 1, b + 1);
    BetaPrime(a, b), b > 2, to BetaPrime(a + 1, b - 2).
    """
    if isinstance(f, Normal):
        return Normal(f.mean_value, f.variance_value)
    if isinstance(f, Gamma):
        return Gamma(shape=f.shape + 1.0, rate=f.rate)
    if isinstance(f, ChiSquared):
        return ChiSquared(df=f.df + 2.0)
    if isinstance(f, Beta):
        return Beta(a=f.a + 1.0, b=f.b + 1.0)
    if isinstance(f, BetaPrime):
        if f.b <= 2.0:
            raise DomainError("beta-prime transform needs b > 2 (finite variance)")
        return BetaPrime(a=f.a + 1.0, b=f.b - 2.0)
    raise NoClosedFormError(
        f"{type(f).__name__} has no closed-form intervention image"
    )


def ls_cumulant(t: float, cgf, cgf_slope, mean: float, variance: float) -> float:
    """Cumulant function of the transformed law from the original one.

    K~(t) = K(t) + log[(K'(t) - mean) / (t * variance)], with the second term
    0 at t = 0 by continuity.
    """
    t = float(t)
    if variance <= 0.0 or not np.isfinite(variance):
        raise UnsupportedDistributionError("transform needs a finite positive variance")
    if t == 0.0:
        return 0.0
    base = float(cgf(t))
    ratio = (float(cgf_slope(t)) - float(mean)) / (t * float(variance))
    if ratio <= 0.0:
        raise DomainError("cumulant slope increment must be positive off the origin")
    return base + float(np.log(ratio))


def ls_cumulant_of(f: DistributionFamily, t: float) -> float:
    """Apply ls_cumulant using the family's own cumulant surface."""
    return ls_cumulant(t, f.cgf, f.cgf_slope, f.mean(), f.variance())
