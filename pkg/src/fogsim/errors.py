"""Exception types shared across the package."""


class FogsimError(Exception):
    """Base class for all package-specific errors."""


class EncodingOverflow(FogsimError):
    """Encoded message body does not fit the 4-byte length prefix."""


class NeedMoreBytes(FogsimError):
    """Buffer ends before the announced frame does; feed more bytes and retry."""

    def __init__(self, needed: int):
        super().__init__(f"need at least {needed} more bytes")
        self.needed = needed


class ProtocolError(FogsimError):
    """Frame is complete but its body cannot be understood."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class CyclicDependency(FogsimError):
    """Task graph contains a cycle."""


class NoActorsAvailable(FogsimError):
    """Scheduling was attempted with an empty actor registry."""


class ConfigError(FogsimError):
    """Scenario configuration is invalid; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DeadlockDetected(FogsimError):
    """Scenario cannot make progress; carries a component state dump."""

    def __init__(self, message: str, dump: str = ""):
        super().__init__(message if not dump else f"{message}\n{dump}")
        self.dump = dump
