"""Exception types shared across the package."""


class DomainError(ValueError):
    """A state lies outside the phase space of the map acting on it."""


class UnsupportedSystemError(ValueError):
    pass


class FitError(RuntimeError):
    """A regression or likelihood fit could not be carried out."""


class InsufficientDataError(RuntimeError):
    """Too few events (hits, exceedances, blocks) for a stable estimate."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class ParseError(ValueError):
    """Malformed input file; ``line`` is the 1-based line (or state) number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
