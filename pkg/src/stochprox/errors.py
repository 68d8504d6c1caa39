"""Exception hierarchy shared by every module of the package."""


class StochProxError(Exception):
    """Base class for all package errors."""


class DomainError(StochProxError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConstructionError(StochProxError, ValueError):
    """A catalog object could not be built from the given parameters."""


class InstanceError(StochProxError):
    """A prox query is ill-posed or its exact oracle failed."""


class ParameterError(StochProxError, ValueError):
    """Invalid estimator/quadrature parameters (e.g. lambda >= 1/rho)."""


class CatalogError(StochProxError, KeyError):
    """Unknown or malformed catalog identifier."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class WindowTooSmallError(StochProxError):
    """Brute-force minimizer landed on the edge of its search window."""


class EvaluationError(StochProxError):
    """The target function returned NaN at a sample point."""

    def __init__(self, message, index=None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


class ZeroMassError(StochProxError):
    """No (or too little) importance/acceptance mass to form an estimate."""

    def __init__(self, message, accepted=0, drawn=0):
        super().__init__(message)
        self.accepted = accepted
        self.drawn = drawn

    @property
    def acceptance_rate(self):
        return self.accepted / self.drawn if self.drawn else 0.0


class QuadratureError(StochProxError):
    """Base class for quadrature failures."""


class QuadratureAccuracyError(QuadratureError):
    """Refinement limit reached before successive iterates agreed."""

    def __init__(self, message, last=None, previous=None):
        super().__init__(message)
        self.last = last
        self.previous = previous


class BoxTooSmallError(QuadratureError):
    """The integration box leaves non-negligible mass outside."""


class RepresentableMassError(QuadratureError):
    """The conditional mass is not representable in double precision."""


class DegenerateFitError(StochProxError, ValueError):
    """A log-log fit was requested on zero or too few errors."""
