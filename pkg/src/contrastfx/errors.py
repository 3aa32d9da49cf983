"""Exception taxonomy shared across contrastfx modules."""


class ContrastFxError(Exception):
    """Base class for all contrastfx errors."""


class ValidationError(ContrastFxError, ValueError):
    """Malformed inputs: bad shapes, non-finite data, out-of-range ids."""


class DomainError(ContrastFxError, ValueError):
    """Mathematically invalid request: undefined moment, point outside support."""


class UnsupportedDistributionError(DomainError):
    """Distribution lacks the moments or structure an operation requires."""


class NoClosedFormError(ContrastFxError):
    """A closed-form result was requested where none exists for the family."""


class ConstraintError(ContrastFxError):
    """A contrast function violates its defining moment constraints."""


class NotADensityError(ContrastFxError):
    """A contrast inversion produced a signed curve, not a density."""


class DegenerateError(ContrastFxError, ArithmeticError):
    """Numerical degeneracy: vanishing denominator or covariance."""


class SingularFitError(ContrastFxError):
    """Unpenalized regression on a rank-deficient design."""


class FoldError(ContrastFxError):
    """Cross-fitting fold is unusable (too small for the learner)."""
