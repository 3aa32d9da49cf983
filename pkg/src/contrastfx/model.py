"""Data containers, v-functions, and the built-in simulation scenarios.

The simulation design pairs two exposure laws with three outcome surfaces.
Covariate Z is standard normal.  Exposure 1 is conditionally normal with mean
4 + 0.2(Z + Z^2) and unit variance; exposure 2 is conditionally gamma with
shape 5 and rate 2.5(1 + Z^2).  Outcome 1 is a Bernoulli draw with success
probability expit(X - 2.5); outcome 2 adds standard normal noise to a smooth
bump surface; outcome 3 adds an effect-modification term 0.2 X 1{Z > 1} on
top of the outcome-2 surface.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _expit

from .errors import DomainError, ValidationError

EXPOSURE2_SHAPE = 5.0


class VKind(str, enum.Enum):
    IDENTITY = "identity"
    RECIPROCAL = "reciprocal"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class VFunction:
    """A monotone weighting function v applied to the exposure.

    ``threshold`` requires a finite cut point ``x0`` and evaluates to the
    step 1{x > x0}; the other kinds must not carry one.
    """

    kind: VKind
    x0: float | None = None

    def __post_init__(self) -> None:
        kind = VKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is VKind.THRESHOLD:
            if self.x0 is None or not np.isfinite(self.x0):
                raise ValidationError("threshold v-function needs a finite x0")
            object.__setattr__(self, "x0", float(self.x0))
        elif self.x0 is not None:
            raise ValidationError(f"{kind.value} v-function takes no x0")

    def __call__(self, x):
        return v_eval(self, x)


def v_eval(v: VFunction, x):
    """Evaluate v at x (scalar or array), returning a float array."""
    x = np.asarray(x, dtype=float)
    if v.kind is VKind.IDENTITY:
        return x.copy()
    if v.kind is VKind.RECIPROCAL:
        if np.any(x == 0.0):
            raise DomainError("reciprocal v-function is undefined at x = 0")
        return 1.0 / x
    return (x > v.x0).astype(float)


class WeightScheme(str, enum.Enum):
    """How subgroup-level effects are pooled across the covariate law."""

    UNITARY = "unit"
    COVARIANCE = "covw"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed triples (y, x, z) with z stored as an (n, d) matrix."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if y.ndim != 1 or x.ndim != 1 or z.ndim != 2:
            raise ValidationError("y and x must be vectors, z a matrix")
        n = y.shape[0]
        if x.shape[0] != n or z.shape[0] != n:
            raise ValidationError("y, x, z must share their first dimension")
        if n < 1 or z.shape[1] < 1:
            raise ValidationError("dataset must be non-empty")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in column {name}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def to_csv(self, path) -> None:
        header = ["y", "x"] + [f"z{j + 1}" for j in range(self.d)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [repr(float(self.y[i])), repr(float(self.x[i]))]
                row += [repr(float(val)) for val in self.z[i]]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            d = len(header) - 2
            expected = ["y", "x"] + [f"z{j + 1}" for j in range(d)]
            if d < 1 or header != expected:
                raise ValidationError(
                    f"{path}: expected header y,x,z1,...,zd, got {','.join(header)}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValidationError(f"{path}:{lineno}: wrong field count")
                try:
                    rows.append([float(val) for val in row])
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: non-numeric field"
                    ) from None
        if not rows:
            raise ValidationError(f"{path}: no data rows")
        arr = np.asarray(rows, dtype=float)
        return cls(y=arr[:, 0], x=arr[:, 1], z=arr[:, 2:])


@dataclass(frozen=True)
class ScenarioSpec:
    """Identifies one simulation scenario: exposure law and outcome surface."""

    exposure_id: int
    outcome_id: int

    def __post_init__(self) -> None:
        if self.exposure_id not in (1, 2):
            raise ValidationError(f"exposure_id must be 1 or 2, got {self.exposure_id}")
        if self.outcome_id not in (1, 2, 3):
            raise ValidationError(f"outcome_id must be 1, 2, or 3, got {self.outcome_id}")

    @property
    def label(self) -> str:
        return f"(Y{self.outcome_id},X{self.exposure_id})"


def expit(t):
    """Numerically stable logistic function, safe for |t| up to overflow."""
    return np.asarray(_expit(np.asarray(t, dtype=float)))


def exposure_location(z):
    """Conditional mean of exposure 1 given z (its conditional sd is 1)."""
    z = np.asarray(z, dtype=float)
    return 4.0 + 0.2 * (z + z * z)


def exposure_rate(z):
    """Conditional rate of exposure 2 given z (its shape is EXPOSURE2_SHAPE)."""
    z = np.asarray(z, dtype=float)
    return 2.5 * (1.0 + z * z)


def exposure_density(exposure_id: int, z: float):
    """Conditional exposure distribution at a fixed covariate value."""
    from . import density

    z = float(z)
    if exposure_id == 1:
        return density.Normal(float(exposure_location(z)), 1.0)
    if exposure_id == 2:
        return density.Gamma(shape=EXPOSURE2_SHAPE, rate=float(exposure_rate(z)))
    raise ValidationError(f"exposure_id must be 1 or 2, got {exposure_id}")


def _bump(x):
    # shared smooth component of outcome surfaces 2 and 3
    return 2.0 * (x - 2.5) * (x - 3.0) * np.exp(-0.5 * (x - 3.0) ** 2)


def _bump_slope(x):
    return 2.0 * np.exp(-0.5 * (x - 3.0) ** 2) * (
        (2.0 * x - 5.5) - (x - 2.5) * (x - 3.0) ** 2
    )


def m_true(spec: ScenarioSpec, x, z=None):
    """True conditional outcome mean m(x, z) for the scenario's surface."""
    x = np.asarray(x, dtype=float)
    if spec.outcome_id == 1:
        return expit(x - 2.5)
    base = x - _bump(x)
    if spec.outcome_id == 2:
        return base
    if z is None:
        raise ValidationError("outcome 3 surface needs z")
    z = np.asarray(z, dtype=float)
    return base + 0.2 * x * (z > 1.0)


def m_prime_true(spec: ScenarioSpec, x, z=None):
    """Partial derivative of the true outcome surface in x."""
    x = np.asarray(x, dtype=float)
    if spec.outcome_id == 1:
        p = expit(x - 2.5)
        return p * (1.0 - p)
    base = 1.0 - _bump_slope(x)
    if spec.outcome_id == 2:
        return base
    if z is None:
        raise ValidationError("outcome 3 surface needs z")
    z = np.asarray(z, dtype=float)
    return base + 0.2 * (z > 1.0)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Named substream of the master seed.

    Streams are keyed, not sequential, so adding an outcome column never
    perturbs the covariate or exposure draws.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def simulate_scenario(spec: ScenarioSpec, n: int, seed: int) -> Dataset:
    """Draw n observations from the scenario under the master seed."""
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    z = substream(seed, 0).standard_normal(n)
    if spec.exposure_id == 1:
        x = exposure_location(z) + substream(seed, 1, 1).standard_normal(n)
    else:
        x = substream(seed, 1, 2).gamma(EXPOSURE2_SHAPE, 1.0 / exposure_rate(z), n)
    noise = substream(seed, 2, spec.outcome_id)
    if spec.outcome_id == 1:
        y = (noise.random(n) < m_true(spec, x)).astype(float)
    else:
        y = m_true(spec, x, z) + noise.standard_normal(n)
    return Dataset(y=y, x=x, z=z)
