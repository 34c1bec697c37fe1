"""Exception hierarchy shared by every module."""


class CrossoverError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPlanError(CrossoverError, ValueError):
    pass


class InvalidSegmentError(CrossoverError, IndexError):
    pass


class CorruptSegmentError(CrossoverError, ValueError):
    pass


class InvalidWorldError(CrossoverError, ValueError):
    pass


class UnsupportedTopologyError(CrossoverError, ValueError):
    pass


class TopologyFailureError(CrossoverError, RuntimeError):
    pass


class CorruptStateError(CrossoverError, ValueError):
    pass


class InvalidInputError(CrossoverError, ValueError):
    pass


class InvalidGroupError(CrossoverError, ValueError):
    pass


class InvalidMethodError(CrossoverError, ValueError):
    pass


class UsageError(CrossoverError, ValueError):
    """Bad configuration value; the message names the offending key."""


class DivergedError(CrossoverError, FloatingPointError):
    """A gradient or parameter became non-finite.

    ``records`` carries whatever metrics were produced before the failure so
    callers can still flush them.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])
