"""Exception types raised by the monitoring toolkit."""


class DomainError(ValueError):
    """An argument lies outside the support or parameter space of a model."""


class NumericalFailure(ArithmeticError):
    """Posterior mass vanished entirely (every candidate log-mass is -inf)."""


class DegeneracyError(NumericalFailure):
    """Every particle assigns zero likelihood to the current observation."""
