"""Exception hierarchy shared by every module of the package."""


class RabiError(Exception):
    """Base class for all solver errors."""


class InvalidCoupling(RabiError, ValueError):
    pass


class InvalidDetuning(RabiError, ValueError):
    pass


class NonFinite(RabiError, ValueError):
    pass


class TruncationTooSmall(RabiError):
    """The Fock truncation drops a tail that is not negligible."""


class TruncationCapExceeded(RabiError):
    pass


class OutsideValidity(RabiError):
    """A closed-form approximation has no real solution at these parameters."""


class WindowTooSmall(RabiError):
    pass


class NoConvergence(RabiError):
    """An iteration stopped before meeting its tolerance.

    ``partial`` carries whatever was obtained before giving up (levels,
    root candidates, ...), so callers can still report it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = list(partial) if partial is not None else []
