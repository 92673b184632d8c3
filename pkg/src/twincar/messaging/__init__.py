from .bus import (
    DEFAULT_QUEUE_DEPTH,
    Bus,
    BusRegistry,
    Envelope,
    Subscription,
    Topic,
    TopicKind,
    create_bus,
)
from .codec import Field, FieldType, Schema, decode, encode
from .trace import (
    Recorder,
    ReplayReport,
    TraceEntry,
    TraceLog,
    load_trace,
    replay_trace,
    save_trace,
)

__all__ = [
    "DEFAULT_QUEUE_DEPTH",
    "Bus",
    "BusRegistry",
    "Envelope",
    "Field",
    "FieldType",
    "Recorder",
    "ReplayReport",
    "Schema",
    "Subscription",
    "Topic",
    "TopicKind",
    "TraceEntry",
    "TraceLog",
    "create_bus",
    "decode",
    "encode",
    "load_trace",
    "replay_trace",
    "save_trace",
]
