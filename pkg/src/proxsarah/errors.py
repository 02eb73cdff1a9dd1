"""Exception hierarchy shared by every module of the package."""


class ProxSarahError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(ProxSarahError, ValueError):
    pass


class UnsupportedOperationError(ProxSarahError):
    pass


class ConfigurationError(ProxSarahError, ValueError):
    pass


class EnumerationTooLargeError(ProxSarahError):
    pass


class StateError(ProxSarahError):
    pass


class ParseError(ProxSarahError, ValueError):
    """Malformed dataset text. ``line`` is 1-based."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line
