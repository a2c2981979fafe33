"""Exception hierarchy shared by all modules."""


class JumpitoError(Exception):
    pass


class ConfigurationError(JumpitoError, ValueError):
    """Invalid parameters, malformed configs, unresolvable grids."""


class DomainError(JumpitoError, ValueError):
    """An argument lies outside the domain of the operation (e.g. t not in [0, T])."""


class PreconditionError(JumpitoError, ValueError):
    """A structural precondition of an operation fails on the sampled data."""
