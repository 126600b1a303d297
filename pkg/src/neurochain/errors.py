"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (config 2, data 3, transport 4),
so raise the most specific class that applies.
"""


class NeurochainError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NeurochainError):
    """Invalid configuration: bad scenario, mismatched channel counts, bad flags."""


class DataError(NeurochainError):
    """Invalid data: malformed CSV rows, non-monotonic spike times, duplicates."""


class MetricError(DataError):
    """A metric is undefined for the given input (e.g. zero-variance signal)."""


class SingularFitError(DataError):
    """Degenerate design matrix with ridge disabled; re-run with ridge > 0."""


class TransportError(NeurochainError):
    """Socket-level failure: connect refused, timeout, connection dropped."""


class TransportTimeout(TransportError):
    """The peer did not answer within the configured timeout."""


class WireParseError(NeurochainError):
    """A protocol line did not match the wire grammar."""

    def __init__(self, message: str, line: bytes | str = b""):
        super().__init__(message)
        self.line = line


class ProtocolError(NeurochainError):
    """The peer answered with an ERR message."""

    def __init__(self, code: int, text: str):
        super().__init__(f"ERR {code} {text}")
        self.code = code
        self.text = text
