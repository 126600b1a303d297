"""neurochain: a desk-scale brain-machine processing chain.

Spike-train ingestion and features, a linear per-finger decoder, a
deterministic dataflow pipeline, a newline-framed TCP/WebSocket protocol,
a simulated JACO-like arm server with configurable transport latency, and
a proportional closed-loop controller with lag/oscillation analytics.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    MetricError,
    NeurochainError,
    ProtocolError,
    SingularFitError,
    TransportError,
    TransportTimeout,
    WireParseError,
)
from .timebase import SpikeTimestamp, decode_timestamp, encode_timestamp

__all__ = [
    "__version__",
    "ConfigError", "DataError", "MetricError", "NeurochainError",
    "ProtocolError", "SingularFitError", "TransportError", "TransportTimeout",
    "WireParseError",
    "SpikeTimestamp", "encode_timestamp", "decode_timestamp",
]
