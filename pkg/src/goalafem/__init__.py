"""Goal-oriented adaptive FEM and BEM with several marking strategies."""

from .errors import ConfigurationError, GoalAfemError, InputError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "GoalAfemError", "InputError", "NumericalError", "__version__"]
