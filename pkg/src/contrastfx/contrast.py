"""Contrast functions and their inversion into intervention densities.

A contrast function l for exposure X given a subgroup is any function with
E[l(X)] = 0 and E[l(X) X] = 1 under the subgroup's exposure law f.  Weighting
the outcome by a contrast identifies a local effect, and every monotone
non-constant v induces one through

    l(x) = {v(x) - E[v(X)]} / Cov{v(X), X}.

The inversion result implemented here turns any such l into an exposure law:

    f~(x) = -integral_{lo}^{x} l(t) f(t) dt

is a proper density whenever l is a valid contrast built from a monotone v,
and it satisfies the duality E[l(X) g(X)] = E_f~[g'(X)] for differentiable g.
The density route is deliberately numeric (cumulative quadrature); closed
forms live with the least-squares transform in the density module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, interpolate

from . import density as densities
from .errors import (
    ConstraintError,
    DegenerateError,
    DomainError,
    NotADensityError,
    ValidationError,
)
from .model import VFunction, VKind, v_eval


@dataclass(frozen=True, eq=False)
class ContrastFunction:
    """A callable contrast l with provenance and quadrature metadata."""

    fn: Callable
    provenance: str
    v: VFunction | None = None
    v_mean: float | None = None
    v_exposure_cov: float | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


def contrast_from_v(v: VFunction, v_mean: float, v_exposure_cov: float) -> ContrastFunction:
    """Normalize v into a contrast using its mean and covariance with X."""
    v_mean = float(v_mean)
    v_exposure_cov = float(v_exposure_cov)
    if not (np.isfinite(v_mean) and np.isfinite(v_exposure_cov)):
        raise ValidationError("v_mean and v_exposure_cov must be finite")
    if v_exposure_cov == 0.0:
        raise DegenerateError("Cov{v(X), X} = 0: v carries no exposure signal")
    breaks = (v.x0,) if v.kind is VKind.THRESHOLD else ()
    return ContrastFunction(
        fn=lambda x: (v_eval(v, x) - v_mean) / v_exposure_cov,
        provenance="from_v",
        v=v,
        v_mean=v_mean,
        v_exposure_cov=v_exposure_cov,
        breakpoints=breaks,
    )


def v_moments(v: VFunction, f: densities.DistributionFamily) -> tuple[float, float]:
    """(E[v(X)], Cov{v(X), X}) under f, by closed form where available."""
    if v.kind is VKind.IDENTITY:
        return float(f.mean()), float(f.variance())
    if v.kind is VKind.RECIPROCAL:
        rho = float(f.reciprocal_mean())
        return rho, 1.0 - float(f.mean()) * rho
    F0 = float(f.cdf(v.x0))
    S0 = float(f.sf(v.x0))
    if F0 <= 0.0 or S0 <= 0.0:
        raise DomainError("threshold must sit inside the support mass")
    lower, upper = f.truncated_means(v.x0)
    return S0, F0 * S0 * (float(upper) - float(lower))


def contrast_for(f: densities.DistributionFamily, v: VFunction) -> ContrastFunction:
    """Contrast induced by v under f."""
    rho, beta = v_moments(v, f)
    return contrast_from_v(v, rho, beta)


def ade_contrast(f: densities.DistributionFamily, x):
    """Average-derivative contrast -d/dx log f(x), elementwise."""
    x = np.asarray(x, dtype=float)
    if np.any(np.asarray(f.pdf(x), dtype=float) <= 0.0):
        raise DomainError("density vanishes at a requested point")
    return -np.asarray(f.log_density_slope(x), dtype=float)


def ade_contrast_fn(f: densities.DistributionFamily) -> ContrastFunction:
    return ContrastFunction(
        fn=lambda x: ade_contrast(f, x),
        provenance="ade",
        breakpoints=f.quad_breakpoints(),
    )


def adrd_contrast(f_marginal, f_conditional, x):
    """Derivative contrast -f_marginal'(x) / f_conditional(x), elementwise.

    Requires the conditional law to put density wherever the marginal does.
    """
    x = np.asarray(x, dtype=float)
    num = -np.asarray(f_marginal.pdf(x)) * np.asarray(f_marginal.log_density_slope(x))
    den = np.asarray(f_conditional.pdf(x), dtype=float)
    bad = (den <= 0.0) & (np.asarray(f_marginal.pdf(x)) > 0.0)
    if np.any(bad):
        raise DomainError("conditional density vanishes where the marginal does not")
    return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)


def _integration_range(f, fn, tail: float = 1e-12) -> tuple[float, float]:
    # extend past the quantile range until |fn * pdf| has negligible tail
    lo, hi = f.quantile_range(tail)
    anchor = float(np.clip(f.ppf(0.5), lo, hi))
    lo_sup, hi_sup = f.support()

    def weight(x):
        return abs(float(fn(np.asarray([x]))[0])) * float(f.pdf(x))

    if not np.isfinite(hi_sup):
        hi = densities.tail_cutoff(weight, anchor, hi, tol=1e-11)
    if not np.isfinite(lo_sup):
        lo = densities.tail_cutoff(weight, anchor, lo, tol=1e-11)
    return lo, hi


def expectation(f: densities.DistributionFamily, fn, breakpoints=()) -> float:
    """Adaptive-quadrature E[fn(X)] under f with breakpoint splitting."""
    lo, hi = _integration_range(f, fn)
    points = sorted(
        {b for b in (*breakpoints, *f.quad_breakpoints()) if lo < b < hi}
    )
    # full_output suppresses slow-convergence warnings, which are routine for
    # integrable endpoint singularities (reciprocal contrasts near zero)
    out = integrate.quad(
        lambda t: float(fn(np.asarray([t]))[0]) * float(f.pdf(t)),
        lo,
        hi,
        points=points or None,
        limit=400,
        epsabs=1e-10,
        epsrel=1e-10,
        full_output=1,
    )
    return float(out[0])


def moment_residuals(l: ContrastFunction, f: densities.DistributionFamily) -> tuple[float, float]:
    """(E[l(X)], E[l(X) X] - 1): both vanish for a valid contrast."""
    r0 = expectation(f, lambda x: l(x), breakpoints=l.breakpoints)
    r1 = expectation(f, lambda x: l(x) * x, breakpoints=l.breakpoints) - 1.0
    return r0, r1


def intervention_from_contrast(
    l: ContrastFunction,
    f: densities.DistributionFamily,
    n_points: int = 2001,
    tail: float = 1e-9,
    constraint_tol: float = 1e-6,
    negativity_slack: float = -1e-8,
) -> densities.DensityCurve:
    """Invert a contrast into its intervention density by cumulative quadrature.

    Checks the moment constraints first, integrates -l f from the lower end,
    extends the grid until the remaining mass is negligible, and validates
    nonnegativity (within round-off slack) and unit mass.
    """
    r0, r1 = moment_residuals(l, f)
    if abs(r0) > constraint_tol or abs(r1) > constraint_tol:
        raise ConstraintError(
            f"moment constraints violated: E[l] = {r0:.2e}, E[lX] - 1 = {r1:.2e}"
        )

    base = densities.mass_grid(f, n_points=n_points, tail=tail)
    extra = [b for b in l.breakpoints if base[0] < b < base[-1]]
    grid = np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))

    # the cumulative must start where the contrast-weighted density is already
    # negligible, otherwise fast-growing contrasts leak mass past the quantile
    # window; widen with the same cutoff rule the expectation routine uses
    lo_sup, hi_sup = f.support()
    if not np.isfinite(lo_sup) or not np.isfinite(hi_sup):
        lo_w, hi_w = _integration_range(f, lambda x: l(x) * x)
        pieces = [grid]
        if not np.isfinite(lo_sup) and lo_w < grid[0]:
            pieces.append(np.linspace(lo_w, grid[0], 65)[:-1])
        if not np.isfinite(hi_sup) and hi_w > grid[-1]:
            pieces.append(np.linspace(grid[-1], hi_w, 65)[1:])
        grid = np.unique(np.concatenate(pieces))

    # graded nodes toward finite endpoints keep algebraic singularities of
    # the image density (shapes like x^p with p < 1 near zero) resolved for
    # downstream interpolation of the curve
    refinements = []
    if np.isfinite(lo_sup) and grid.size >= 4:
        span = grid[3] - lo_sup
        if span > 0.0:
            refinements.append(lo_sup + np.geomspace(span * 1e-8, span, 48))
    if np.isfinite(hi_sup) and grid.size >= 4:
        span = hi_sup - grid[-4]
        if span > 0.0:
            refinements.append(hi_sup - np.geomspace(span * 1e-8, span, 48))
    if refinements:
        grid = np.unique(np.concatenate([grid, *refinements]))

    def integrand(t):
        return -l(t) * np.asarray(f.pdf(t), dtype=float)

    def segment(a: float, b: float) -> float:
        return float(_gauss_segments(integrand, np.asarray([a, b]))[0])

    def adaptive_cell(a: float, b: float) -> float:
        # full_output suppresses slow-convergence warnings, which are routine
        # for integrable singularities; the mass identity below is the gate
        out = integrate.quad(
            lambda t: float(integrand(np.asarray([t]))[0]),
            a, b, limit=200, epsabs=1e-13, epsrel=1e-10, full_output=1,
        )
        return float(out[0])

    increments = _gauss_segments(integrand, grid)
    # cells touching a finite support endpoint can hide an algebraic
    # singularity that defeats fixed-order quadrature; redo those adaptively,
    # otherwise their error rides the whole cumulative as a constant offset
    if np.isfinite(lo_sup):
        for k in range(min(3, increments.size)):
            increments[k] = adaptive_cell(grid[k], grid[k + 1])
    if np.isfinite(hi_sup):
        for k in range(max(0, increments.size - 3), increments.size):
            increments[k] = adaptive_cell(grid[k], grid[k + 1])
    head = 0.0
    if np.isfinite(lo_sup) and grid[0] > lo_sup:
        head = adaptive_cell(lo_sup, grid[0])
    values = head + np.concatenate([[0.0], np.cumsum(increments)])

    # extend outward while the endpoint still carries estimable mass
    anchor = float(np.clip(f.ppf(0.5), grid[0], grid[-1]))
    if not np.isfinite(hi_sup):
        xs, vs = _extend_cumulative(segment, anchor, grid[-1], values[-1])
        grid = np.concatenate([grid, xs])
        values = np.concatenate([values, vs])

    floor = float(np.min(values))
    if floor < negativity_slack:
        raise NotADensityError(
            f"inverted contrast dips to {floor:.3e}: not a valid density"
        )
    values = np.maximum(values, 0.0)

    # integration by parts: total mass equals the boundary term plus E[l X]
    # restricted to the tabulated window, evaluated by independent quadrature
    points = sorted(
        {b for b in (*l.breakpoints, *f.quad_breakpoints()) if grid[0] < b < grid[-1]}
    )
    moment_lo = lo_sup if np.isfinite(lo_sup) else grid[0]
    moment, _ = integrate.quad(
        lambda t: float(l(np.asarray([t]))[0]) * t * float(f.pdf(t)),
        moment_lo,
        grid[-1],
        points=points or None,
        limit=400,
        epsabs=1e-10,
        epsrel=1e-10,
    )
    mass = grid[-1] * values[-1] + float(moment)
    if abs(mass - 1.0) > 1e-6:
        raise NotADensityError(
            f"inverted contrast carries mass {mass:.8f}, expected 1 within 1e-6"
        )
    return densities.DensityCurve(grid=grid, values=values)


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _gauss_segments(fn, grid: np.ndarray) -> np.ndarray:
    """Fixed-order Gauss-Legendre integral of fn over each grid cell."""
    a, b = grid[:-1], grid[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[None, :] + half[None, :] * _GAUSS_NODES[:, None]
    vals = np.asarray(fn(nodes.reshape(-1)), dtype=float).reshape(nodes.shape)
    return half * np.einsum("i,ij->j", _GAUSS_WEIGHTS, vals)


def _extend_cumulative(segment, anchor, start, start_value,
                       growth: float = 1.4, tol: float = 1e-10, max_steps: int = 400):
    xs, vs = [], []
    x, val = float(start), float(start_value)
    r = x - anchor
    if r <= 0.0 or val <= 0.0:
        return np.asarray(xs), np.asarray(vs)
    for _ in range(max_steps):
        x2 = anchor + r * growth
        val2 = val + segment(x, x2)
        xs.append(x2)
        vs.append(max(val2, 0.0))
        if val2 <= 0.0:
            break
        if val2 == val:
            # the tail no longer moves the cumulative at all; pushing the
            # window further only inflates the boundary term
            break
        k = -(np.log(val2) - np.log(val)) / np.log(growth) if val > 0.0 else np.inf
        remaining = val2 * (x2 - anchor) / max(k - 1.0, 0.1)
        x, r, val = x2, r * growth, val2
        if remaining < tol:
            break
    return np.asarray(xs), np.asarray(vs)


def verify_duality(
    l: ContrastFunction,
    f: densities.DistributionFamily,
    g,
    g_slope,
    n_points: int = 2001,
) -> float:
    """|E[l(X) g(X)] - E_f~[g'(X)]|, the two sides integrated independently."""
    lhs = expectation(f, lambda x: l(x) * np.asarray(g(x), dtype=float), breakpoints=l.breakpoints)
    curve = intervention_from_contrast(l, f, n_points=n_points)

    # the curve has kinks where the contrast jumps, so interpolate each
    # smooth piece separately instead of splining across a corner
    edges = sorted(b for b in set(l.breakpoints) if curve.grid[0] < b < curve.grid[-1])
    cuts = [0, *np.searchsorted(curve.grid, np.asarray(edges)).tolist(), curve.grid.size - 1]
    rhs = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        piece = slice(a, b + 1)
        dens = interpolate.CubicSpline(curve.grid[piece], curve.values[piece])

        def weighted_slope(x, dens=dens):
            return np.asarray(g_slope(x), dtype=float) * np.maximum(dens(x), 0.0)

        rhs += float(np.sum(_gauss_segments(weighted_slope, curve.grid[piece])))
    return abs(lhs - rhs)


@dataclass(frozen=True, eq=False)
class MomentProfile:
    """Subgroup moment summary driving the optimal-contrast solution.

    a_k are noise-precision-weighted exposure moments E[X^k / sigma^2(X)],
    b_k the raw moments E[X^k]; sigma2 evaluates the conditional outcome
    noise at an exposure value.
    """

    a0: float
    a1: float
    a2: float
    b1: float
    b2: float
    sigma2: Callable

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "b1", "b2"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValidationError(f"moment {name} must be finite")
            object.__setattr__(self, name, val)
        if self.a0 <= 0.0:
            raise ValidationError("a0 = E[1/sigma^2] must be positive")
        if self.a1 * self.a1 - self.a0 * self.a2 >= 0.0:
            raise DegenerateError(
                "weighted moments are degenerate: exposure carries no variation"
            )

    @classmethod
    def from_discrete(cls, points, probs, noise_variances) -> "MomentProfile":
        points = np.asarray(points, dtype=float)
        probs = np.asarray(probs, dtype=float)
        noise = np.asarray(noise_variances, dtype=float)
        if points.shape != probs.shape or points.shape != noise.shape:
            raise ValidationError("points, probs, noise_variances must align")
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("probs must be a probability vector")
        if np.any(noise <= 0.0):
            raise ValidationError("noise variances must be positive")
        w = probs / noise
        order = np.argsort(points)
        pts, nz = points[order], noise[order]
        return cls(
            a0=float(w.sum()),
            a1=float((w * points).sum()),
            a2=float((w * points**2).sum()),
            b1=float((probs * points).sum()),
            b2=float((probs * points**2).sum()),
            sigma2=lambda x: np.interp(np.asarray(x, dtype=float), pts, nz),
        )


def optimal_contrast(profile: MomentProfile) -> tuple[ContrastFunction, float]:
    """Efficiency-optimal contrast and its unnormalized subgroup weight.

    The contrast minimizing the asymptotic variance contribution subject to
    the two moment constraints is linear in x over the noise variance:

        l(x) = (a1 - a0 x) / {(a1^2 - a0 a2) sigma^2(x)} .

    The matching subgroup weight is proportional to 1 / E[l^2 sigma^2],
    which simplifies to (a0 a2 - a1^2) / a0; with homoscedastic noise it
    reduces to Var(X) / sigma^2.
    """
    disc = profile.a1**2 - profile.a0 * profile.a2

    def fn(x):
        x = np.asarray(x, dtype=float)
        return (profile.a1 - profile.a0 * x) / (disc * np.asarray(profile.sigma2(x), dtype=float))

    weight = (profile.a0 * profile.a2 - profile.a1**2) / profile.a0
    return ContrastFunction(fn=fn, provenance="optimal"), float(weight)
