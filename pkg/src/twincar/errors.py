"""Exception hierarchy shared across the stack."""


class TwinError(Exception):
    """Base class for all errors raised by this package."""


class BusError(TwinError):
    """Bus or topic misuse (duplicate bus, unknown topic, kind conflict)."""


class SchemaError(TwinError):
    """Schema registration or field-layout violation."""


class EncodeError(SchemaError):
    """Record does not match the schema at encode time."""


class DecodeError(SchemaError):
    """Bytes cannot be decoded under the given schema."""


class SchemaMismatchError(SchemaError):
    """(schema_id, schema_version) does not match the registered schema."""


class TraceError(TwinError):
    """Trace log file is corrupt or cannot be replayed."""


class HalError(TwinError):
    """Virtual hardware access outside the configured ranges."""


class DriverError(TwinError):
    """Driver-level violation (angle or pulse outside feasible range)."""


class SimulationError(TwinError):
    """Simulator misconfiguration or infeasible steering input."""


class WireError(TwinError):
    """Wire protocol violation (framing, oversize, handshake)."""


class FrameTooLargeError(WireError):
    """Frame exceeds the maximum allowed size."""


class HandshakeError(WireError):
    """Endpoint handshake failed (version or topic-map mismatch)."""


class BridgeDisconnectedError(WireError):
    """Operation attempted on a disconnected bridge."""


class CompositionError(TwinError):
    """Composition cannot be assembled or does not support the operation."""


class ConfigError(TwinError):
    """Configuration file or value is invalid."""


class CalibrationError(TwinError):
    """Velocity-factor search failed to bracket or converge."""


class ManifestError(TwinError):
    """Template manifest file is malformed."""
