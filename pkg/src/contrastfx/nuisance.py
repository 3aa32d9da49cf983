"""Nuisance regressions and cross-fitting machinery.

The estimators need up to five conditional means of the covariate: the
outcome mean, the exposure mean, the mean of v(exposure), and for the
unit-weight estimator the conditional covariance Cov{v(X), X|Z} together
with the conditional effect ratio.  Everything here is deliberately small:
two deterministic learners (a polynomial ridge with generalized
cross-validation and a k-nearest-neighbor average), balanced folds, and
immutable predictors so fits can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import DegenerateError, DomainError, FoldError, SingularFitError, ValidationError
from .model import Dataset, VFunction, VKind, substream, v_eval


def _as_matrix(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValidationError("covariates must form a nonempty 2-d array")
    if not np.all(np.isfinite(z)):
        raise ValidationError("covariates must be finite")
    return z


@dataclass(frozen=True)
class PolynomialRidge:
    """Ridge regression on a polynomial basis; penalty=None selects by GCV."""

    degree: int = 2
    penalty: float | None = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValidationError("degree must be nonnegative")
        if self.penalty is not None and self.penalty < 0.0:
            raise ValidationError("penalty must be nonnegative")


@dataclass(frozen=True)
class KNearest:
    k: int = 25

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")


def _monomial_powers(d: int, degree: int) -> tuple[tuple[int, ...], ...]:
    powers = []
    for total in range(1, degree + 1):
        for combo in combinations_with_replacement(range(d), total):
            p = [0] * d
            for j in combo:
                p[j] += 1
            powers.append(tuple(p))
    return tuple(powers)


def _monomial_features(z: np.ndarray, powers) -> np.ndarray:
    cols = [np.prod(z**np.asarray(p, dtype=float), axis=1) for p in powers]
    if not cols:
        return np.empty((z.shape[0], 0))
    return np.column_stack(cols)


class Predictor:
    """Deterministic fitted conditional mean; identical inputs, identical outputs."""

    kind: str = "base"
    fold_id: int | None = None

    def predict(self, z) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z) -> np.ndarray:
        return self.predict(z)


@dataclass(frozen=True, eq=False)
class RidgePredictor(Predictor):
    n_inputs: int
    powers: tuple
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    coef: np.ndarray
    intercept: float
    penalty_used: float
    fold_id: int | None = None
    kind: str = "poly_ridge"

    def predict(self, z) -> np.ndarray:
        z = _as_matrix(z)
        if z.shape[1] != self.n_inputs:
            raise ValidationError("covariate dimension differs from the fit")
        if not self.powers:
            return np.full(z.shape[0], self.intercept)
        f = (_monomial_features(z, self.powers) - self.feature_mean) / self.feature_scale
        return f @ self.coef + self.intercept


# candidate penalties scale with n because standardized singular values do;
# the grid itself is fixed
_GCV_GRID = np.logspace(-9.0, 1.0, 21)


def _fit_poly_ridge(learner: PolynomialRidge, z: np.ndarray, y: np.ndarray, fold_id=None):
    n, d = z.shape
    powers = _monomial_powers(d, learner.degree)
    f = _monomial_features(z, powers)
    mean = f.mean(axis=0, keepdims=True) if powers else np.zeros((1, d))
    scale = f.std(axis=0, keepdims=True) if powers else np.ones((1, d))
    if powers:
        scale = np.where(scale > 0.0, scale, 1.0)
        fc = (f - mean) / scale
    else:
        fc = np.empty((n, 0))
    yc = y - y.mean()
    if fc.shape[1] == 0:
        return RidgePredictor(
            n_inputs=d,
            powers=powers,
            feature_mean=np.zeros((1, 0)),
            feature_scale=np.ones((1, 0)),
            coef=np.zeros(0),
            intercept=float(y.mean()),
            penalty_used=0.0,
            fold_id=fold_id,
        )
    u, s, vt = np.linalg.svd(fc, full_matrices=False)
    g = u.T @ yc
    if learner.penalty == 0.0:
        if np.min(s) <= 1e-10 * np.max(s) or n <= len(powers):
            raise SingularFitError(
                "penalty-free polynomial fit is rank deficient; add a penalty or data"
            )
        lam = 0.0
    elif learner.penalty is not None:
        lam = float(learner.penalty)
    else:
        total = float(yc @ yc)
        best = (np.inf, 0.0)
        for lam_c in n * _GCV_GRID:
            a = s**2 / (s**2 + lam_c)
            rss = total - float(g**2 @ (2.0 * a - a**2))
            df = 1.0 + float(a.sum())
            score = n * max(rss, 0.0) / (n - df) ** 2 if df < n else np.inf
            if score < best[0]:
                best = (score, lam_c)
        lam = best[1]
    shrink = s / (s**2 + lam) if lam > 0.0 else 1.0 / s
    coef = vt.T @ (shrink * g)
    return RidgePredictor(
        n_inputs=d,
        powers=powers,
        feature_mean=mean,
        feature_scale=scale,
        coef=coef,
        intercept=float(y.mean()),
        penalty_used=float(lam),
        fold_id=fold_id,
    )


@dataclass(frozen=True, eq=False)
class NearestPredictor(Predictor):
    z_train: np.ndarray
    targets: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    k: int
    fold_id: int | None = None
    kind: str = "k_nearest"

    def predict(self, z) -> np.ndarray:
        z = _as_matrix(z)
        if z.shape[1] != self.z_train.shape[1]:
            raise ValidationError("covariate dimension differs from the fit")
        q = (z - self.center) / self.scale
        out = np.empty(z.shape[0])
        train_sq = np.einsum("ij,ij->i", self.z_train, self.z_train)
        for start in range(0, z.shape[0], 2048):
            block = q[start : start + 2048]
            d2 = train_sq[None, :] - 2.0 * block @ self.z_train.T
            # ties broken by training index so predictions are reproducible
            order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[start : start + 2048] = self.targets[order].mean(axis=1)
        return out


def _fit_k_nearest(learner: KNearest, z: np.ndarray, y: np.ndarray, fold_id=None):
    if learner.k > z.shape[0]:
        raise ValidationError("k exceeds the number of training rows")
    center = z.mean(axis=0, keepdims=True)
    scale = z.std(axis=0, keepdims=True)
    scale = np.where(scale > 0.0, scale, 1.0)
    return NearestPredictor(
        z_train=(z - center) / scale,
        targets=np.asarray(y, dtype=float).copy(),
        center=center,
        scale=scale,
        k=learner.k,
        fold_id=fold_id,
    )


def fit_conditional_mean(learner, z, target, fold_id=None) -> Predictor:
    """Fit one conditional-mean learner on (covariates, target)."""
    z = _as_matrix(z)
    target = np.asarray(target, dtype=float)
    if target.ndim != 1 or target.size != z.shape[0]:
        raise ValidationError("target must be a vector aligned with the covariates")
    if not np.all(np.isfinite(target)):
        raise ValidationError("target must be finite")
    if isinstance(learner, PolynomialRidge):
        return _fit_poly_ridge(learner, z, target, fold_id=fold_id)
    if isinstance(learner, KNearest):
        return _fit_k_nearest(learner, z, target, fold_id=fold_id)
    raise ValidationError(f"unknown learner: {learner!r}")


@dataclass(frozen=True, eq=False)
class FunctionPredictor(Predictor):
    """Wraps a known function of z; used to inject oracle nuisances in tests."""

    fn: object
    fold_id: int | None = None
    kind: str = "function"

    def predict(self, z) -> np.ndarray:
        z = _as_matrix(z)
        return np.asarray(self.fn(z), dtype=float).reshape(z.shape[0])


@dataclass(frozen=True, eq=False)
class ClippedPredictor(Predictor):
    """Magnitude floor around zero, sign preserving; zero maps to +floor."""

    base: Predictor
    floor: float
    kind: str = "clipped"

    @property
    def fold_id(self):
        return self.base.fold_id

    def predict(self, z) -> np.ndarray:
        raw = self.base.predict(z)
        sign = np.where(raw < 0.0, -1.0, 1.0)
        return np.where(np.abs(raw) < self.floor, sign * self.floor, raw)

    def clip_mask(self, z) -> np.ndarray:
        return np.abs(self.base.predict(z)) < self.floor


@dataclass(frozen=True, eq=False)
class RatioPredictor(Predictor):
    """Pointwise ratio of two fits; with a clipped denominator the product
    ratio * denominator reproduces the numerator fit up to rounding."""

    num: Predictor
    den: Predictor
    kind: str = "ratio"

    @property
    def fold_id(self):
        return self.num.fold_id

    def predict(self, z) -> np.ndarray:
        return self.num.predict(z) / self.den.predict(z)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    n: int
    k: int
    assignment: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.shape != (self.n,):
            raise FoldError("assignment must have one fold index per observation")
        if a.min() < 0 or a.max() >= self.k:
            raise FoldError("fold indices out of range")
        counts = np.bincount(a, minlength=self.k)
        if np.any(counts == 0):
            raise FoldError("every fold must be nonempty")
        if counts.max() - counts.min() > 1:
            raise FoldError("fold sizes must differ by at most one")
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_seed(cls, n: int, k: int, seed: int) -> "FoldPlan":
        if k < 2:
            raise FoldError("cross-fitting needs at least 2 folds")
        if n < k:
            raise FoldError("fewer observations than folds")
        pattern = np.arange(n) % k
        assignment = substream(seed, 11).permutation(pattern)
        return cls(n=n, k=k, assignment=assignment, seed=seed)

    def folds(self):
        for j in range(self.k):
            test = np.nonzero(self.assignment == j)[0]
            train = np.nonzero(self.assignment != j)[0]
            yield j, test, train


@dataclass(frozen=True, eq=False)
class NuisanceFits:
    """Per-fold fitted nuisances; beta/lam present only for the unit-weight path."""

    fold_id: int
    m: Predictor
    pi: Predictor
    rho: Predictor
    beta: ClippedPredictor | None = None
    lam: Predictor | None = None


@dataclass(frozen=True, eq=False)
class CrossFits:
    plan: FoldPlan
    fits: tuple[NuisanceFits, ...]
    clip_floor: float | None = None

    def out_of_fold(self, data: Dataset) -> dict:
        """Score every observation with the fits from its held-out fold."""
        if data.n != self.plan.n:
            raise ValidationError("dataset size differs from the fold plan")
        has_lambda = all(f.beta is not None for f in self.fits)
        out = {
            "m": np.empty(data.n),
            "pi": np.empty(data.n),
            "rho": np.empty(data.n),
        }
        if has_lambda:
            out["beta"] = np.empty(data.n)
            out["lam"] = np.empty(data.n)
            out["clipped"] = np.zeros(data.n, dtype=bool)
        for fit in self.fits:
            idx = np.nonzero(self.plan.assignment == fit.fold_id)[0]
            zk = data.z[idx]
            out["m"][idx] = fit.m.predict(zk)
            out["pi"][idx] = fit.pi.predict(zk)
            out["rho"][idx] = fit.rho.predict(zk)
            if has_lambda:
                out["beta"][idx] = fit.beta.predict(zk)
                out["lam"][idx] = fit.lam.predict(zk)
                out["clipped"][idx] = fit.beta.clip_mask(zk)
        return out

    @classmethod
    def from_functions(
        cls, plan: FoldPlan, m, pi, rho, beta=None, lam=None, clip_floor=None
    ) -> "CrossFits":
        """Cross-fit container around known nuisance functions (oracle tests)."""
        fits = []
        for j in range(plan.k):
            beta_p = None
            if beta is not None:
                floor = clip_floor if clip_floor is not None else 0.0
                beta_p = ClippedPredictor(FunctionPredictor(beta, fold_id=j), floor)
            lam_p = FunctionPredictor(lam, fold_id=j) if lam is not None else None
            if beta_p is not None and lam_p is None:
                raise ValidationError("a ratio fit requires both beta and lam")
            fits.append(
                NuisanceFits(
                    fold_id=j,
                    m=FunctionPredictor(m, fold_id=j),
                    pi=FunctionPredictor(pi, fold_id=j),
                    rho=FunctionPredictor(rho, fold_id=j),
                    beta=beta_p,
                    lam=lam_p,
                )
            )
        return cls(plan=plan, fits=tuple(fits), clip_floor=clip_floor)


def _reciprocal_admissible(x: np.ndarray):
    zero = np.nonzero(x == 0.0)[0]
    if zero.size:
        rows = ", ".join(str(int(i)) for i in zero[:5])
        raise DomainError(f"reciprocal v undefined: x is 0 at rows {rows}")
    if np.any(x > 0.0) and np.any(x < 0.0):
        raise DomainError("reciprocal v needs all exposures of one sign")


def fit_nuisances(
    data: Dataset,
    v: VFunction,
    plan: FoldPlan,
    need_lambda: bool = False,
    learner=PolynomialRidge(),
) -> CrossFits:
    """Fit all nuisances per fold on that fold's complement.

    The conditional covariance fit regresses the product of centered v(x)
    and centered x on z; the ratio fit divides the matching outcome-product
    regression by the clipped covariance fit.  The clip floor is 1e-3 times
    the magnitude of the whole-sample covariance of v(x) and x.
    """
    if data.n != plan.n:
        raise ValidationError("dataset size differs from the fold plan")
    if v.kind is VKind.RECIPROCAL:
        _reciprocal_admissible(data.x)
    vx = v_eval(v, data.x)
    clip_floor = None
    if need_lambda:
        sample_cov = float(np.cov(vx, data.x, ddof=1)[0, 1])
        if sample_cov == 0.0:
            raise DegenerateError("sample covariance of v(x) and x is zero")
        clip_floor = 1e-3 * abs(sample_cov)
    fits = []
    for j, _test, train in plan.folds():
        if train.size < 2:
            raise FoldError(f"fold {j} leaves too few rows to fit on")
        zt = data.z[train]
        try:
            m_hat = fit_conditional_mean(learner, zt, data.y[train], fold_id=j)
            pi_hat = fit_conditional_mean(learner, zt, data.x[train], fold_id=j)
            rho_hat = fit_conditional_mean(learner, zt, vx[train], fold_id=j)
        except ValidationError as exc:
            raise FoldError(f"fold {j} is too small for the learner: {exc}") from exc
        beta_hat = lam_hat = None
        if need_lambda:
            rv = vx[train] - rho_hat.predict(zt)
            rx = data.x[train] - pi_hat.predict(zt)
            ry = data.y[train] - m_hat.predict(zt)
            beta_raw = fit_conditional_mean(learner, zt, rv * rx, fold_id=j)
            num_hat = fit_conditional_mean(learner, zt, rv * ry, fold_id=j)
            beta_hat = ClippedPredictor(beta_raw, clip_floor)
            lam_hat = RatioPredictor(num_hat, beta_hat)
        fits.append(
            NuisanceFits(fold_id=j, m=m_hat, pi=pi_hat, rho=rho_hat, beta=beta_hat, lam=lam_hat)
        )
    return CrossFits(plan=plan, fits=tuple(fits), clip_floor=clip_floor)
