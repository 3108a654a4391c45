"""Exception hierarchy shared across the solver modules."""


class FSPError(Exception):
    """Base class for all errors raised by cmefsp."""


class InvalidNetworkError(FSPError, ValueError):
    pass


class InvalidArgumentError(FSPError, ValueError):
    pass


class CapacityError(FSPError):
    """The truncated state space grew past the configured cap."""

    def __init__(self, cap, size):
        self.cap = cap
        self.size = size
        super().__init__(f"state space size {size} exceeds max_states={cap}")


class StaleSpaceError(FSPError):
    """An object was used against a state space other than the one it was built for."""


class DegeneratePruneError(FSPError):
    """Pruning would remove all probability mass, so renormalization is impossible."""


class ExpmvFailure(FSPError):
    """Krylov integration did not reach the requested tolerance.

    Carries the best available approximation and its error estimate.
    """

    def __init__(self, message, w=None, t_reached=0.0, error=float("inf")):
        super().__init__(message)
        self.w = w
        self.t_reached = t_reached
        self.error = error


class OracleCapError(FSPError):
    pass


class ConfigError(FSPError, ValueError):
    """Raised for malformed or semantically invalid run configurations."""


class BudgetError(FSPError):
    """The global error budget check failed and no override was given."""

    def __init__(self, decision):
        self.decision = decision
        super().__init__(
            f"error budget violated: bound {decision.bound:.6g} > "
            f"eps_global {decision.eps_global:.6g}"
        )
