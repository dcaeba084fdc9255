"""Exception types raised across the package."""


class ToricError(Exception):
    """Base class for all errors raised by toric_extremal."""


class InvalidParameterError(ToricError, ValueError):
    pass


class SingularSystemError(ToricError, ArithmeticError):
    pass


class BoundaryPointError(ToricError, ValueError):
    """A point lies on (or outside) the polytope boundary."""


class IndefiniteHessianError(ToricError, ArithmeticError):
    """The Hessian of the symplectic potential is not positive definite."""


class InfeasibleIntegrandError(ToricError, ArithmeticError):
    pass


class InfeasibleStartError(ToricError, ValueError):
    pass


class NoSignChangeError(ToricError, ValueError):
    pass


class NegativeRadicandError(ToricError, ArithmeticError):
    pass


class IndefiniteGramError(ToricError, ArithmeticError):
    pass


class MalformedFileError(ToricError, ValueError):
    pass


class SingularNormalEquationsError(ToricError, ArithmeticError):
    """Damped normal equations stay singular for every admissible damping."""
