"""Ground-truth engine for the benchmark scenarios.

True estimand values are computed by Monte Carlo over the covariate and
quadrature or closed forms over the exposure.  The outer average is the only
Monte Carlo step; every inner conditional moment is evaluated to near machine
precision, so the reported standard error reflects covariate sampling alone.

Conditional moment strategy, by exposure:

* Exposure 1 (unit-variance normal, location 4 + 0.2(z + z^2)): Gauss-Hermite
  rules for full-line moments; threshold covariances use the exact identity
  Cov{step, X} = density at the cut, with the short side of the cut integrated
  by a scaled Gauss-Legendre rule so nothing cancels catastrophically.  The
  reciprocal moment exists only as a principal value and is evaluated through
  the Dawson function; the remainder E[{m(X) - m(0)}/X] is smooth and handled
  by the same Hermite rule.
* Exposure 2 (gamma, shape 5, rate 2.5(1 + z^2)): generalized Gauss-Laguerre
  rules with weights u^4 and u^3 (the latter absorbs 1/X exactly);
  Cov{1/X, X} = -1/(shape - 1) exactly.  Upper-tail threshold moments use the
  substitution u = rate * (x - x0), which cancels the exp(-rate * x0) factor
  analytically, and integer-shape survival polynomials so large rates never
  underflow inside a ratio.

Reductions are deterministic: chunk partial sums are combined in chunk order
regardless of worker count, so a fixed seed gives a bit-stable answer.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from . import density as densities
from .contrast import expectation, v_moments
from .errors import DegenerateError, DomainError, ValidationError
from .model import (
    EXPOSURE2_SHAPE,
    ScenarioSpec,
    VFunction,
    VKind,
    exposure_location,
    exposure_rate,
    m_prime_true,
    m_true,
    substream,
)

DEFAULT_Z_DRAWS = 2_000_000
SMOKE_Z_DRAWS = 10_000
MIN_Z_DRAWS = 10_000

_Z_STREAM_KEY = 7


class EstimandKind(str, Enum):
    """Which functional of the conditional contrast parts is targeted."""

    ADE = "ade"
    UNIT = "unit"
    COV_WEIGHTED = "covw"


@dataclass(frozen=True)
class EstimandId:
    kind: EstimandKind
    v: VFunction | None = None

    def __post_init__(self):
        if self.kind is EstimandKind.ADE:
            if self.v is not None:
                raise ValidationError("the derivative effect carries no v function")
        elif self.v is None:
            raise ValidationError(f"{self.kind.value} estimand requires a v function")

    @classmethod
    def ade(cls) -> "EstimandId":
        return cls(EstimandKind.ADE)

    @classmethod
    def unit(cls, v: VFunction) -> "EstimandId":
        return cls(EstimandKind.UNIT, v)

    @classmethod
    def cov_weighted(cls, v: VFunction) -> "EstimandId":
        return cls(EstimandKind.COV_WEIGHTED, v)

    @property
    def label(self) -> str:
        if self.kind is EstimandKind.ADE:
            return "ade"
        v = self.v
        tag = v.kind.value if v.kind is not VKind.THRESHOLD else f"threshold@{v.x0:g}"
        return f"{self.kind.value}:{tag}"


@dataclass(frozen=True)
class TrueValue:
    value: float
    mc_standard_error: float
    n_z_draws: int

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValidationError("true value must be finite")
        if not (np.isfinite(self.mc_standard_error) and self.mc_standard_error >= 0.0):
            raise ValidationError("mc_standard_error must be nonnegative")


# quadrature rules are module constants: nodes ascending, weights normalized
# so each rule computes an expectation directly
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / math.sqrt(2.0 * math.pi)
_GLAG4_X, _GLAG4_W = special.roots_genlaguerre(64, 4.0)
_GLAG4_W = _GLAG4_W / math.gamma(EXPOSURE2_SHAPE)
_GLAG3_X, _GLAG3_W = special.roots_genlaguerre(64, 3.0)
_GLAG3_W = _GLAG3_W / math.gamma(EXPOSURE2_SHAPE - 1.0)
_LAG_X, _LAG_W = special.roots_laguerre(48)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _outcome_values(spec: ScenarioSpec, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return m_true(spec, x, z)


def _normal_lower_mass_moment(spec, mu, z, x0):
    # integral of m(x, z) * normal pdf over (-inf, x0], rescaled Gauss-Legendre;
    # the window [min(mu - 9, x0 - 2), x0] carries all but e^-18 of the mass
    lo = np.minimum(mu - 9.0, x0 - 2.0)
    half = 0.5 * (x0 - lo)
    mid = 0.5 * (x0 + lo)
    x = mid[None, :] + half[None, :] * _GL_X[:, None]
    dens = np.exp(-0.5 * (x - mu[None, :]) ** 2) / math.sqrt(2.0 * math.pi)
    vals = _outcome_values(spec, x, z)
    return half * np.einsum("i,ij->j", _GL_W, vals * dens)


def _normal_upper_mass_moment(spec, mu, z, x0):
    hi = np.maximum(mu + 9.0, x0 + 2.0)
    half = 0.5 * (hi - x0)
    mid = 0.5 * (hi + x0)
    x = mid[None, :] + half[None, :] * _GL_X[:, None]
    dens = np.exp(-0.5 * (x - mu[None, :]) ** 2) / math.sqrt(2.0 * math.pi)
    vals = _outcome_values(spec, x, z)
    return half * np.einsum("i,ij->j", _GL_W, vals * dens)


def _columns_exposure1(spec, z, vs, want_ade, x0_default=3.0):
    z = np.asarray(z, dtype=float)
    mu = exposure_location(z)
    x = mu[None, :] + _GH_X[:, None]
    mvals = _outcome_values(spec, x, z)
    em = np.einsum("i,ij->j", _GH_W, mvals)
    out = {}
    if want_ade:
        out["ade"] = np.einsum("i,ij->j", _GH_W, m_prime_true(spec, x, z))
    for v in vs:
        if v.kind is VKind.IDENTITY:
            num = np.einsum("i,ij->j", _GH_W, _GH_X[:, None] * mvals)
            den = np.ones_like(mu)
            ratio = num
        elif v.kind is VKind.RECIPROCAL:
            # principal-value reciprocal moments: E[1/X] via the Dawson
            # function, the smooth remainder by the Hermite rule
            pv = math.sqrt(2.0) * special.dawsn(mu / math.sqrt(2.0))
            m0 = _outcome_values(spec, np.zeros((1, z.size)), z)[0]
            safe = np.where(np.abs(x) < 1e-8, 1.0, x)
            ratio_vals = np.where(
                np.abs(x) < 1e-8,
                m_prime_true(spec, np.zeros_like(x), z),
                (mvals - m0[None, :]) / safe,
            )
            em_over = np.einsum("i,ij->j", _GH_W, ratio_vals) + m0 * pv
            num = em_over - pv * em
            den = 1.0 - mu * pv
            ratio = num / den
        else:
            x0 = float(v.x0)
            a = x0 - mu
            f0 = special.ndtr(a)
            s0 = special.ndtr(-a)
            den = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
            num = np.empty_like(mu)
            low_side = f0 <= 0.5
            if np.any(low_side):
                idx = np.nonzero(low_side)[0]
                part = _normal_lower_mass_moment(spec, mu[idx], z[idx], x0)
                num[idx] = f0[idx] * em[idx] - part
            if np.any(~low_side):
                idx = np.nonzero(~low_side)[0]
                part = _normal_upper_mass_moment(spec, mu[idx], z[idx], x0)
                num[idx] = part - s0[idx] * em[idx]
            ratio = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
        out[v] = (num, den, ratio)
    return out


def _survival_poly(y: np.ndarray, order: int) -> np.ndarray:
    # sum_{k<order} y^k / k!: the integer-shape gamma survival function is
    # exp(-y) times this, so ratios of survivals never touch exp(-y)
    total = np.ones_like(y)
    term = np.ones_like(y)
    for k in range(1, order):
        term = term * y / k
        total = total + term
    return total


def _columns_exposure2(spec, z, vs, want_ade):
    z = np.asarray(z, dtype=float)
    rate = exposure_rate(z)
    shape = EXPOSURE2_SHAPE
    x = _GLAG4_X[:, None] / rate[None, :]
    mvals = _outcome_values(spec, x, z)
    em = np.einsum("i,ij->j", _GLAG4_W, mvals)
    mu = shape / rate
    out = {}
    if want_ade:
        out["ade"] = np.einsum("i,ij->j", _GLAG4_W, m_prime_true(spec, x, z))
    for v in vs:
        if v.kind is VKind.IDENTITY:
            centered = (_GLAG4_X[:, None] - shape) / rate[None, :]
            num = np.einsum("i,ij->j", _GLAG4_W, centered * mvals)
            den = shape / rate**2
            ratio = num / den
        elif v.kind is VKind.RECIPROCAL:
            rho = rate / (shape - 1.0)
            x3 = _GLAG3_X[:, None] / rate[None, :]
            em_over = rho * np.einsum("i,ij->j", _GLAG3_W, _outcome_values(spec, x3, z))
            num = em_over - rho * em
            den = np.full_like(mu, -1.0 / (shape - 1.0))
            ratio = num / den
        else:
            x0 = float(v.x0)
            if x0 <= 0.0:
                raise DomainError("threshold must sit inside the positive support")
            y = rate * x0
            t = _LAG_X[:, None]
            xt = x0 + t / rate[None, :]
            poly = (y[None, :] + t) ** 4 / math.gamma(shape)
            upper = np.einsum(
                "i,ij->j", _LAG_W, _outcome_values(spec, xt, z) * poly
            )
            p5 = _survival_poly(y, int(shape))
            p6 = _survival_poly(y, int(shape) + 1)
            s0 = special.gammaincc(shape, y)
            f0 = special.gammainc(shape, y)
            em_upper = upper / p5
            ex_upper = mu * p6 / p5
            em_lower = (em - s0 * em_upper) / f0
            ex_lower = mu * (1.0 - s0 * p6 / p5) / f0
            d_m = em_upper - em_lower
            d_x = ex_upper - ex_lower
            num = f0 * s0 * d_m
            den = f0 * s0 * d_x
            ratio = d_m / d_x
        out[v] = (num, den, ratio)
    return out


def scenario_columns(
    spec: ScenarioSpec, z, vs: tuple[VFunction, ...] = (), want_ade: bool = False
) -> dict:
    """Per-covariate conditional parts for the scenario's exposure law.

    Returns a dict keyed by each v (value: (num, den, ratio) arrays where
    num = Cov{v(X), m(X, Z)|Z}, den = Cov{v(X), X|Z}) and, when requested,
    by "ade" (value: E[m'(X, Z)|Z]).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or not np.all(np.isfinite(z)):
        raise ValidationError("z must be a finite vector")
    if spec.exposure_id == 1:
        return _columns_exposure1(spec, z, vs, want_ade)
    return _columns_exposure2(spec, z, vs, want_ade)


def conditional_parts(spec: ScenarioSpec, v: VFunction, z: float) -> tuple[float, float]:
    """(Cov{v(X), m|Z=z}, Cov{v(X), X|Z=z}) for one covariate value."""
    if not np.isfinite(z):
        raise ValidationError("z must be finite")
    cols = scenario_columns(spec, np.asarray([float(z)]), vs=(v,))
    num, den, _ = cols[v]
    return float(num[0]), float(den[0])


def conditional_derivative_effect(spec: ScenarioSpec, z: float) -> float:
    """E[m'(X, Z)|Z=z] for one covariate value."""
    cols = scenario_columns(spec, np.asarray([float(z)]), want_ade=True)
    return float(cols["ade"][0])


def estimand_from_parts(kind: EstimandKind, num, den) -> TrueValue:
    """Reduce per-draw conditional parts into a point value and MC error.

    The unit-weight functional averages the per-draw ratio; the covariance
    weighted functional takes the ratio of averages, with a linearized
    standard error.  With parts proportional across draws the two coincide.
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    if num.shape != den.shape or num.ndim != 1 or num.size < 2:
        raise ValidationError("num and den must be equal-length vectors")
    n = num.size
    if kind is EstimandKind.UNIT:
        scale = float(np.median(np.abs(den)))
        if not np.all(np.abs(den) > 1e-12 * max(scale, 1e-300)):
            raise DegenerateError("a subgroup has vanishing contrast denominator")
        return _mean_value(num / den)
    if kind is EstimandKind.COV_WEIGHTED:
        mean_num = float(np.mean(num))
        mean_den = float(np.mean(den))
        rms_den = math.sqrt(float(np.mean(den**2)))
        if abs(mean_den) <= 1e-10 * max(rms_den, 1e-300):
            raise DegenerateError("average contrast denominator vanishes")
        value = mean_num / mean_den
        resid = num - value * den
        se = float(np.std(resid, ddof=1)) / (abs(mean_den) * math.sqrt(n))
        return TrueValue(value=value, mc_standard_error=se, n_z_draws=n)
    raise ValidationError("parts reduction applies to contrast estimands only")


def _mean_value(x: np.ndarray) -> TrueValue:
    n = x.size
    se = float(np.std(x, ddof=1)) / math.sqrt(n)
    return TrueValue(value=float(np.mean(x)), mc_standard_error=se, n_z_draws=n)


def _check_draws(n_z: int) -> int:
    # the MC standard error needs at least two draws; callers are expected
    # to warn when below MIN_Z_DRAWS, not refuse
    n_z = int(n_z)
    if n_z < 2:
        raise ValidationError(f"n_z must be at least 2, got {n_z}")
    return n_z


def _chunk_slices(n: int, chunk: int):
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _map_chunks(fn, slices, threads: int):
    # partials are combined in chunk order, so the reduction is bit-stable
    # for any worker count
    if threads <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


_UNIT_STATS = 2  # sum r, sum r^2
_COVW_STATS = 5  # sum num, den, num^2, den^2, num*den


def _covw_partial(num, den):
    return np.array(
        [num.sum(), den.sum(), (num**2).sum(), (den**2).sum(), (num * den).sum()]
    )


def _covw_reduce(stats: np.ndarray, n: int) -> TrueValue:
    sn, sd, snn, sdd, snd = stats
    if abs(sd) <= 1e-10 * max(math.sqrt(sdd * n), 1e-300):
        raise DegenerateError("average contrast denominator vanishes")
    value = sn / sd
    mean_den = sd / n
    var_resid = (snn - 2.0 * value * snd + value**2 * sdd - n * (sn / n - value * sd / n) ** 2) / (n - 1)
    se = math.sqrt(max(var_resid, 0.0)) / (abs(mean_den) * math.sqrt(n))
    return TrueValue(value=float(value), mc_standard_error=float(se), n_z_draws=n)


def _mean_reduce(s1: float, s2: float, n: int) -> TrueValue:
    var = (s2 - s1 * s1 / n) / (n - 1)
    return TrueValue(
        value=float(s1 / n),
        mc_standard_error=math.sqrt(max(var, 0.0) / n),
        n_z_draws=n,
    )


def _unit_partial(ratio, den):
    if not np.all(np.isfinite(ratio)):
        raise DegenerateError("a subgroup has vanishing contrast denominator")
    return np.array([ratio.sum(), (ratio**2).sum()])


def true_estimand(
    spec: ScenarioSpec,
    estimand: EstimandId,
    n_z: int = DEFAULT_Z_DRAWS,
    seed: int = 0,
    threads: int = 1,
    chunk_size: int = 16384,
) -> TrueValue:
    """Monte Carlo true value of one estimand under a benchmark scenario."""
    n_z = _check_draws(n_z)
    z = substream(seed, _Z_STREAM_KEY, spec.exposure_id).standard_normal(n_z)
    vs = () if estimand.kind is EstimandKind.ADE else (estimand.v,)
    want_ade = estimand.kind is EstimandKind.ADE

    def work(sl):
        cols = scenario_columns(spec, z[sl], vs=vs, want_ade=want_ade)
        if want_ade:
            a = cols["ade"]
            return np.array([a.sum(), (a**2).sum()])
        num, den, ratio = cols[estimand.v]
        if estimand.kind is EstimandKind.UNIT:
            return _unit_partial(ratio, den)
        return _covw_partial(num, den)

    partials = _map_chunks(work, _chunk_slices(n_z, chunk_size), threads)
    stats = np.sum(np.stack(partials), axis=0)
    if estimand.kind is EstimandKind.COV_WEIGHTED:
        return _covw_reduce(stats, n_z)
    return _mean_reduce(stats[0], stats[1], n_z)


STANDARD_VS = (
    VFunction(VKind.IDENTITY),
    VFunction(VKind.RECIPROCAL),
    VFunction(VKind.THRESHOLD, 3.0),
)


@dataclass(frozen=True)
class TableCell:
    spec: ScenarioSpec
    estimand: EstimandId
    result: TrueValue


def true_table(
    n_z: int = DEFAULT_Z_DRAWS,
    seed: int = 0,
    threads: int = 1,
    chunk_size: int = 16384,
    vs: tuple[VFunction, ...] = STANDARD_VS,
) -> list[TableCell]:
    """All benchmark cells: 6 scenarios x (derivative effect + 2 x len(vs)).

    Covariate draws are shared across outcomes and estimands within an
    exposure, matching how the benchmark table is produced.
    """
    n_z = _check_draws(n_z)
    cells: list[TableCell] = []
    for exposure_id in (1, 2):
        z = substream(seed, _Z_STREAM_KEY, exposure_id).standard_normal(n_z)
        specs = [ScenarioSpec(exposure_id=exposure_id, outcome_id=o) for o in (1, 2, 3)]

        def work(sl):
            parts = []
            for spec in specs:
                cols = scenario_columns(spec, z[sl], vs=vs, want_ade=True)
                a = cols["ade"]
                parts.append(np.array([a.sum(), (a**2).sum()]))
                for v in vs:
                    num, den, ratio = cols[v]
                    parts.append(_unit_partial(ratio, den))
                    parts.append(_covw_partial(num, den))
            return np.concatenate(parts)

        partials = _map_chunks(work, _chunk_slices(n_z, chunk_size), threads)
        stats = np.sum(np.stack(partials), axis=0)
        pos = 0
        for spec in specs:
            cells.append(
                TableCell(spec, EstimandId.ade(), _mean_reduce(stats[pos], stats[pos + 1], n_z))
            )
            pos += 2
            for v in vs:
                cells.append(
                    TableCell(
                        spec,
                        EstimandId.unit(v),
                        _mean_reduce(stats[pos], stats[pos + 1], n_z),
                    )
                )
                pos += _UNIT_STATS
                cells.append(
                    TableCell(spec, EstimandId.cov_weighted(v), _covw_reduce(stats[pos : pos + _COVW_STATS], n_z))
                )
                pos += _COVW_STATS
    return cells


def conditional_effect(
    f: densities.DistributionFamily,
    m,
    kind: EstimandKind,
    v: VFunction | None = None,
    m_prime=None,
) -> float:
    """Contrast effect (or derivative effect) for a single explicit exposure law.

    Quadrature-based and family-agnostic; the scenario engines above are the
    fast path for the benchmark.  For the reciprocal v the support must be
    strictly positive.
    """
    if kind is EstimandKind.ADE:
        if m_prime is None:
            raise ValidationError("derivative effect requires m_prime")
        return expectation(f, lambda x: np.asarray(m_prime(x), dtype=float))
    if v is None:
        raise ValidationError("contrast effects require a v function")
    if v.kind is VKind.RECIPROCAL and f.support()[0] < 0.0:
        raise DomainError("reciprocal v requires a positive exposure support")
    rho, beta = v_moments(v, f)
    breaks = (v.x0,) if v.kind is VKind.THRESHOLD else ()
    evm = expectation(
        f,
        lambda x: (v(x) - rho) * np.asarray(m(x), dtype=float),
        breakpoints=breaks,
    )
    return evm / beta


@dataclass(frozen=True, eq=False)
class TransformCurves:
    truth: densities.DensityCurve
    intervention: densities.DensityCurve
    median: float


def transform_curves(f: densities.DistributionFamily) -> TransformCurves:
    """Source density, its least-squares intervention image, and the median.

    Restricted to families with a closed-form image so the output can be
    checked against it; the curve itself is computed by the numeric route.
    """
    densities.ls_intervention_family(f)
    curve = densities.ls_intervention_curve(f)
    truth = densities.DensityCurve(grid=curve.grid, values=np.asarray(f.pdf(curve.grid), dtype=float))
    return TransformCurves(truth=truth, intervention=curve, median=float(f.ppf(0.5)))
