"""Exception types shared across the library."""


class RdlError(Exception):
    """Base class for all library errors."""


class InvalidOperation(RdlError):
    """An operation was rejected before touching replica state."""


class DecodeError(RdlError):
    """A byte string could not be decoded as the claimed value."""

    def __init__(self, message: str, kind: str = "malformed"):
        super().__init__(message)
        self.kind = kind


class TruncatedError(DecodeError):
    def __init__(self, message: str):
        super().__init__(message, kind="truncated")


class TrailingBytesError(DecodeError):
    def __init__(self, message: str):
        super().__init__(message, kind="trailing")


class FrameError(DecodeError):
    """Connection-fatal framing problem (bad magic, version, oversize)."""

    def __init__(self, message: str, kind: str = "frame"):
        super().__init__(message, kind=kind)


class MalformedUpdate(RdlError):
    """A decoded update failed semantic validation during apply."""


class PersistenceError(RdlError):
    """Durable storage failure or unrecoverable on-disk corruption."""


class WalCorruption(PersistenceError):
    """Interior WAL corruption (not a torn tail)."""


class PluginError(RdlError):
    """Plug-in protocol failure local to one plug-in."""
