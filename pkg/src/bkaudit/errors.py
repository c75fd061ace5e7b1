"""Exception hierarchy shared by all modules."""


class AuditError(Exception):
    """Base class for all library errors."""


class DomainError(AuditError):
    """A point or box lies outside the domain of a map."""


class SingularJacobian(AuditError):
    """|det J| is below 1e-14 or not finite."""


class DimensionMismatch(AuditError):
    """Operands have incompatible dimensions."""


class NonIntegrable(AuditError):
    """Quadrature diverged or returned a non-positive mass."""


class BudgetExceeded(AuditError):
    """Quadrature hit its evaluation budget.

    ``value``, ``err_est`` and ``evals`` carry the best estimate.
    """

    def __init__(self, message, value=float("nan"), err_est=float("inf"), evals=0):
        super().__init__(message)
        self.value = value
        self.err_est = err_est
        self.evals = evals


class NaNEncountered(AuditError):
    """The integrand returned NaN."""


class DegeneratePolygon(AuditError):
    """Polygon area below 1e-14."""


class EmptySupport(AuditError):
    """A constraint misses the support of a density."""


class EmptyIntersection(AuditError):
    """Interval or polygon intersection is empty."""


class NoConvergence(AuditError):
    """An extrapolation sequence failed its Cauchy check."""


class DivideByZero(AuditError):
    """Bayes factor with zero denominator."""


class NonPositiveLikelihood(AuditError):
    """AIC requested with a non-positive maximum likelihood."""


class SingularEvidence(AuditError):
    """Evidence is infinite for the requested hyperparameter."""

    def __init__(self, message, value=float("inf")):
        super().__init__(message)
        self.value = value


class NoMaximumInBracket(AuditError):
    """The profile maximum sits on a regular bracket boundary."""


class NonPositiveDensity(AuditError):
    """Transport construction needs strictly positive densities."""


class CDFInversionFailure(AuditError):
    """Monotone CDF inversion did not reach tolerance."""


class NonFinite(AuditError):
    """A density evaluated to a non-finite value."""


class ValidationError(AuditError):
    """Scenario file failed schema validation."""
