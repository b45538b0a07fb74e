"""Exception types raised across the package."""


class RotframeError(Exception):
    """Base class for all package errors."""


class InvalidMassError(RotframeError, ValueError):
    """A particle mass is zero, negative or not finite."""


class NonOrthogonalGaugeError(RotframeError, ValueError):
    """Gauge rows are not mass-orthogonal."""


class TranslationInvarianceError(RotframeError, ValueError):
    """A translation-invariant gauge row has a nonzero mass-weighted sum."""


class RankDeficientError(RotframeError, ValueError):
    """Seed vectors are linearly dependent on the rows already present."""


class NotPrincipalAxesError(RotframeError, ValueError):
    """Reference configuration is not centred on principal axes."""


class SingularInertiaError(RotframeError, ValueError):
    """Reference configuration has a vanishing moment of inertia."""


class GaugeViolationError(RotframeError, ValueError):
    """A displacement does not satisfy the gauge conditions."""


class HorizonError(RotframeError, ArithmeticError):
    """The gauge Jacobian vanishes (or nearly so) at the evaluation point."""


class ChartSingularError(RotframeError, ArithmeticError):
    """The chart Jacobian |Lambda| vanishes at the requested parameters."""


class OutOfChartError(RotframeError, ValueError):
    """Chart parameters lie outside the chart domain."""


class QuadratureError(RotframeError, ValueError):
    """A quadrature rule is too coarse for the requested integrand."""


class NonHermitianError(RotframeError, ValueError):
    """A matrix expected to be Hermitian is not."""


class AmbiguousDegeneracyError(RotframeError, ValueError):
    """Unperturbed levels are too close to be grouped reliably."""


class UnsupportedModelError(RotframeError, ValueError):
    """The model does not support the requested construction."""


class UnsupportedOrderError(RotframeError, ValueError):
    """The requested perturbative order is not implemented."""


class IncompatibleSpaceError(RotframeError, ValueError):
    """Operators act on different coordinate lists or scalar rings."""


class ConvergenceError(RotframeError, RuntimeError):
    """An iterative procedure did not converge."""


class ConfigError(RotframeError, ValueError):
    """An experiment configuration is invalid."""
