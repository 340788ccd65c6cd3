class GoalAfemError(Exception):
    """Base class for errors raised by this package."""


class InputError(GoalAfemError, ValueError):
    """Arguments are inconsistent (wrong mesh, bad index, unrepresentable data)."""


class ConfigurationError(GoalAfemError, ValueError):
    """Problem data violate a structural assumption (e.g. indefinite diffusion)."""


class NumericalError(GoalAfemError, ArithmeticError):
    """A factorization, solve or quadrature failed to reach its accuracy target."""
