"""Exception types shared across the package."""


class BubbleKitError(Exception):
    """Base class for all package errors."""


class DomainError(BubbleKitError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(BubbleKitError, RuntimeError):
    """An iterative method failed to converge."""


class BracketError(ConvergenceError):
    """A bisection bracket could not be established."""


class HypothesisViolation(BubbleKitError):
    """The geometric existence hypothesis (negative tangential mean curvature) fails."""


class DegenerateOperator(BubbleKitError, ArithmeticError):
    """A linear operator has a (numerical) kernel."""


class QuadratureError(BubbleKitError, RuntimeError):
    """A quadrature refinement did not converge or two routes disagree."""
