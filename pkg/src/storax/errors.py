"""Exception hierarchy shared by all storax modules."""


class StoraxError(Exception):
    """Base class for every error raised by storax."""


class ParseError(StoraxError, ValueError):
    """Malformed input file."""


class ValidationError(StoraxError, ValueError):
    """Input parsed but violates a domain invariant."""


class InvalidCount(StoraxError, ValueError):
    """Requested number of representative steps or days is out of range."""


class NotDayDivisible(StoraxError, ValueError):
    """Horizon is not a whole number of 24-hour days."""


class EmptySequence(StoraxError, ValueError):
    pass


class NotChronological(StoraxError, ValueError):
    """Sequence decreases somewhere although a chronological one is required."""


class DomainError(StoraxError, ValueError):
    pass


class WrongMode(StoraxError, ValueError):
    """Storage method is incompatible with the aggregation mode."""


class InconsistentInstance(StoraxError, ValueError):
    pass


class SolverNotFound(StoraxError, RuntimeError):
    pass


class SolverFailure(StoraxError, RuntimeError):
    pass


class NonOptimalInput(StoraxError, ValueError):
    pass


class ZeroCapacity(StoraxError, ValueError):
    pass


class ConfigError(StoraxError, ValueError):
    pass


class EmptyReference(StoraxError, ValueError):
    pass


class MissingDuals(StoraxError, ValueError):
    pass
