"""Cross-fitted estimators with influence-curve standard errors.

Both estimators consume out-of-fold nuisance predictions.  The
covariance-weighted estimate is a ratio of residual products and needs
only the three conditional means; the unit-weight estimate additionally
needs the fitted conditional covariance and effect ratio.  Each report
carries the observation-level influence values, so the standard error,
the Wald interval, and the estimating-equation residual can all be
recomputed from the report alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateError, ValidationError
from .model import Dataset, VFunction, v_eval
from .nuisance import CrossFits
from .oracle import EstimandId

SCHEMA_VERSION = 1

# an average this close to zero cannot support a ratio estimate
DENOMINATOR_FLOOR = 1e-10


def confidence_interval(point: float, std_error: float, level: float = 0.95):
    """Two-sided Wald interval; a zero standard error collapses to a point."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    if not np.isfinite(point) or not np.isfinite(std_error) or std_error < 0.0:
        raise ValidationError("point and std_error must be finite, std_error nonnegative")
    if std_error == 0.0:
        return (point, point)
    half = float(ndtri(0.5 + 0.5 * level)) * std_error
    return (point - half, point + half)


@dataclass(frozen=True, eq=False)
class EstimateReport:
    estimand: EstimandId
    point: float
    std_error: float
    ci: tuple[float, float]
    level: float
    n: int
    influence_values: np.ndarray
    diagnostics: Mapping[str, object]

    def __post_init__(self):
        phi = np.asarray(self.influence_values, dtype=float)
        if phi.shape != (self.n,):
            raise ValidationError("influence values must have one entry per observation")
        if not np.all(np.isfinite(phi)):
            raise ValidationError("influence values must be finite")
        object.__setattr__(self, "influence_values", phi)

    def estimating_equation(self) -> float:
        """Mean influence value; zero up to float rounding for a valid fit."""
        return float(self.influence_values.mean())

    def json_dict(self, include_influence: bool = False) -> dict:
        v = self.estimand.v
        out = {
            "schema_version": SCHEMA_VERSION,
            "estimand": {
                "kind": self.estimand.kind.value,
                "v": None
                if v is None
                else {"kind": v.kind.value, "x0": v.x0},
                "label": self.estimand.label,
            },
            "point": self.point,
            "std_error": self.std_error,
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "n": self.n,
            "diagnostics": dict(self.diagnostics),
        }
        if include_influence:
            out["influence_values"] = self.influence_values.tolist()
        return out


def _learner_tag(fits) -> str:
    p = fits.fits[0].m
    if p.kind == "poly_ridge":
        degree = max((sum(pw) for pw in p.powers), default=0)
        return f"poly_ridge(degree={degree})"
    if p.kind == "k_nearest":
        return f"k_nearest(k={p.k})"
    return p.kind


def _residuals(data: Dataset, v: VFunction, fits: CrossFits):
    oof = fits.out_of_fold(data)
    vx = v_eval(v, data.x)
    rv = vx - oof["rho"]
    rx = data.x - oof["pi"]
    ry = data.y - oof["m"]
    return oof, rv, rx, ry


def _build_report(estimand, point, influence, level, fits, oof) -> EstimateReport:
    n = influence.shape[0]
    if n < 2:
        raise ValidationError("standard errors need at least 2 observations")
    std_error = float(np.std(influence, ddof=1) / np.sqrt(n))
    diagnostics = {
        "folds": fits.plan.k,
        "learner": _learner_tag(fits),
        "clip_count": int(oof["clipped"].sum()) if "clipped" in oof else 0,
        "clip_floor": fits.clip_floor,
    }
    return EstimateReport(
        estimand=estimand,
        point=float(point),
        std_error=std_error,
        ci=confidence_interval(float(point), std_error, level),
        level=level,
        n=n,
        influence_values=influence,
        diagnostics=diagnostics,
    )


def estimate_cov_weighted(
    data: Dataset, v: VFunction, fits: CrossFits, level: float = 0.95
) -> EstimateReport:
    """Ratio-form estimate of the covariance-weighted contrast effect."""
    oof, rv, rx, ry = _residuals(data, v, fits)
    den = float(np.mean(rv * rx))
    if abs(den) <= DENOMINATOR_FLOOR:
        raise DegenerateError(
            f"average residual covariance {den:.3e} is too close to zero to divide by"
        )
    point = float(np.mean(rv * ry)) / den
    influence = rv * (ry - point * rx) / den
    return _build_report(EstimandId.cov_weighted(v), point, influence, level, fits, oof)


def estimate_unit_weight(
    data: Dataset, v: VFunction, fits: CrossFits, level: float = 0.95
) -> EstimateReport:
    """Augmented estimate of the unit-weight contrast effect.

    Each observation contributes its fitted subgroup ratio plus a residual
    correction scaled by the clipped conditional covariance."""
    if any(f.beta is None or f.lam is None for f in fits.fits):
        raise ValidationError(
            "unit-weight estimation needs covariance and ratio fits; "
            "run fit_nuisances with need_lambda=True"
        )
    oof, rv, rx, ry = _residuals(data, v, fits)
    terms = rv / oof["beta"] * (ry - oof["lam"] * rx) + oof["lam"]
    point = float(np.mean(terms))
    influence = terms - point
    return _build_report(EstimandId.unit(v), point, influence, level, fits, oof)


def gcm_numerator(data: Dataset, fits: CrossFits) -> float:
    """Average product of exposure and outcome residuals.

    This is the numerator of the identity-v covariance-weighted estimate
    and is symmetric in the roles of exposure and outcome."""
    oof = fits.out_of_fold(data)
    return float(np.mean((data.x - oof["pi"]) * (data.y - oof["m"])))
