"""Message trace recording, file serialization, and replay.

Trace files are the recording/playback substrate for twin sessions: the
file keeps raw payload bytes, so a record/replay round trip is bitwise
faithful. Layout: magic ``TWTR``, u16 format version, u32 metadata length +
UTF-8 JSON metadata, then one record per message (u32 length, u16 topic id,
u8 schema id, u8 schema version, u64 timestamp ns, payload). All integers
big-endian. The topic-id table lives in the metadata blob.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..clock import Scheduler
from ..errors import BusError, TraceError
from .bus import Bus, Subscription

TRACE_MAGIC = b"TWTR"
TRACE_FORMAT_VERSION = 1
_RECORD_HEADER = struct.Struct(">IHBBQ")  # length, topic_id, schema_id, schema_version, ts


@dataclass(frozen=True)
class TraceEntry:
    topic_name: str
    schema_id: int
    schema_version: int
    timestamp_ns: int
    payload: bytes


@dataclass
class TraceLog:
    """Ordered capture of envelopes plus run metadata."""

    metadata: dict[str, Any] = field(default_factory=dict)
    entries: list[TraceEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def span_ns(self) -> int:
        if len(self.entries) < 2:
            return 0
        return self.entries[-1].timestamp_ns - self.entries[0].timestamp_ns

    def topics(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.topic_name, None)
        return list(seen)


def save_trace(trace: TraceLog, path: str | Path) -> None:
    path = Path(path)
    topic_ids: dict[str, int] = {}
    for entry in trace.entries:
        topic_ids.setdefault(entry.topic_name, len(topic_ids))
    meta = dict(trace.metadata)
    meta["topics"] = {str(i): name for name, i in topic_ids.items()}
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")

    with path.open("wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack(">H", TRACE_FORMAT_VERSION))
        fh.write(struct.pack(">I", len(meta_blob)))
        fh.write(meta_blob)
        for entry in trace.entries:
            length = _RECORD_HEADER.size - 4 + len(entry.payload)
            fh.write(
                _RECORD_HEADER.pack(
                    length,
                    topic_ids[entry.topic_name],
                    entry.schema_id,
                    entry.schema_version,
                    entry.timestamp_ns,
                )
            )
            fh.write(entry.payload)


def load_trace(path: str | Path) -> TraceLog:
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:4] != TRACE_MAGIC:
        raise TraceError(f"{path}: not a trace file (bad magic)")
    (version,) = struct.unpack(">H", raw[4:6])
    if version != TRACE_FORMAT_VERSION:
        raise TraceError(f"{path}: unsupported trace format version {version}")
    (meta_len,) = struct.unpack(">I", raw[6:10])
    if 10 + meta_len > len(raw):
        raise TraceError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[10 : 10 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TraceError(f"{path}: corrupt metadata blob") from exc
    topic_names = {int(k): v for k, v in meta.pop("topics", {}).items()}

    entries: list[TraceEntry] = []
    offset = 10 + meta_len
    while offset < len(raw):
        if offset + _RECORD_HEADER.size > len(raw):
            raise TraceError(f"{path}: truncated record header at byte {offset}")
        length, topic_id, schema_id, schema_version, ts = _RECORD_HEADER.unpack(
            raw[offset : offset + _RECORD_HEADER.size]
        )
        payload_len = length - (_RECORD_HEADER.size - 4)
        if payload_len < 0:
            raise TraceError(f"{path}: invalid record length {length}")
        payload_start = offset + _RECORD_HEADER.size
        payload = raw[payload_start : payload_start + payload_len]
        if len(payload) != payload_len:
            raise TraceError(f"{path}: truncated payload at byte {payload_start}")
        if topic_id not in topic_names:
            raise TraceError(f"{path}: record references unknown topic id {topic_id}")
        entries.append(
            TraceEntry(
                topic_name=topic_names[topic_id],
                schema_id=schema_id,
                schema_version=schema_version,
                timestamp_ns=ts,
                payload=payload,
            )
        )
        offset = payload_start + payload_len
    return TraceLog(metadata=meta, entries=entries)


class Recorder:
    """Subscribes to topics and accumulates their envelopes in arrival order."""

    def __init__(self, bus: Bus, topic_names: Sequence[str], metadata: dict[str, Any] | None = None) -> None:
        self._bus = bus
        self._subs: list[Subscription] = [bus.subscribe(name) for name in topic_names]
        self._entries: list[TraceEntry] = []
        self._metadata = dict(metadata or {})
        self._metadata.setdefault("started_at_ns", bus.clock.now_ns)
        self._task = None

    def step(self) -> None:
        batch = []
        for sub in self._subs:
            for env in sub.drain():
                batch.append(env)
        batch.sort(key=lambda env: env.timestamp_ns)  # stable: same-ts keeps sub order
        for env in batch:
            self._entries.append(
                TraceEntry(
                    topic_name=env.topic.name,
                    schema_id=env.schema_id,
                    schema_version=env.schema_version,
                    timestamp_ns=env.timestamp_ns,
                    payload=env.payload,
                )
            )

    def attach(self, scheduler: Scheduler, period_ns: int, order: int = 70) -> None:
        self._task = scheduler.add_periodic(f"recorder[{self._bus.name}]", period_ns, self.step, order=order)

    def stop(self) -> TraceLog:
        if self._task is not None:
            self._task.cancel()
        self.step()
        for sub in self._subs:
            self._bus.unsubscribe(sub)
        return TraceLog(metadata=self._metadata, entries=list(self._entries))


@dataclass
class ReplayReport:
    scheduled: int = 0
    replayed: int = 0
    span_ns: int = 0
    speed: float = 1.0

    @property
    def complete(self) -> bool:
        return self.replayed == self.scheduled


def replay_trace(
    bus: Bus,
    trace: TraceLog,
    speed: float = 1.0,
    scheduler: Scheduler | None = None,
    topics: Sequence[str] | None = None,
    order: int = 5,
) -> ReplayReport:
    """Republish trace entries onto ``bus``, preserving order and scaled gaps.

    With an external scheduler the entries are queued relative to the current
    simulated time and fire as the caller advances it; without one, a private
    virtual clock drives the replay to completion immediately.
    """
    if speed <= 0:
        raise TraceError("replay speed must be positive")
    wanted = None if topics is None else set(topics)
    entries = [e for e in trace.entries if wanted is None or e.topic_name in wanted]

    for entry in entries:
        if not bus.has_topic(entry.topic_name):
            raise BusError(f"replay target bus lacks topic {entry.topic_name!r}")
        schema = bus.topic(entry.topic_name).schema
        if schema.key != (entry.schema_id, entry.schema_version):
            raise TraceError(
                f"trace entry for {entry.topic_name!r} uses schema "
                f"{entry.schema_id}v{entry.schema_version}, bus has {schema.id}v{schema.version}"
            )

    report = ReplayReport(scheduled=len(entries), speed=speed)
    if not entries:
        return report

    own_scheduler = scheduler is None
    if own_scheduler:
        from ..clock import VirtualClock

        scheduler = Scheduler(VirtualClock(bus.clock.now_ns))

    t0 = entries[0].timestamp_ns
    base = scheduler.now_ns
    last_due = base

    def make_publish(entry: TraceEntry):
        def publish() -> None:
            bus.publish_bytes(entry.topic_name, entry.payload, entry.schema_id, entry.schema_version)
            report.replayed += 1

        return publish

    for entry in entries:
        due = base + round((entry.timestamp_ns - t0) / speed)
        last_due = max(last_due, due)
        scheduler.call_at(due, make_publish(entry), order=order, name=f"replay[{entry.topic_name}]")

    report.span_ns = last_due - base
    if own_scheduler:
        scheduler.run_until(last_due)
    return report
