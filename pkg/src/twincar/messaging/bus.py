"""In-process topic bus with typed topics and bounded subscriber queues.

One bus per twin side plays the master/broker role. Buses are isolated by
construction: nothing crosses between them except through the digital-thread
relays. Publishing encodes the record once; every subscriber sees the same
envelope (and therefore the same payload bytes).
"""

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from ..clock import MonotonicClock
from ..errors import BusError, SchemaMismatchError
from .codec import Schema

DEFAULT_QUEUE_DEPTH = 1024


class TopicKind(Enum):
    DATA = "data"
    COMMAND = "command"


@dataclass(frozen=True)
class Topic:
    name: str
    kind: TopicKind
    schema: Schema


@dataclass(frozen=True)
class Envelope:
    """A published message: topic, schema identity, sequencing, payload bytes."""

    topic: Topic
    schema_id: int
    schema_version: int
    sequence: int
    timestamp_ns: int
    payload: bytes

    def decode(self) -> dict[str, Any]:
        if (self.schema_id, self.schema_version) != self.topic.schema.key:
            raise SchemaMismatchError(
                f"envelope carries schema {self.schema_id}v{self.schema_version}, "
                f"topic {self.topic.name!r} expects "
                f"{self.topic.schema.id}v{self.topic.schema.version}"
            )
        return self.topic.schema.decode(self.payload)


class Subscription:
    """Bounded FIFO of envelopes; overflow drops the oldest and counts it."""

    def __init__(self, topic: Topic, maxlen: int) -> None:
        self.topic = topic
        self._maxlen = maxlen
        self._queue: deque[Envelope] = deque()
        self._lock = threading.Lock()
        self.dropped = 0
        self._closed = False

    def _offer(self, envelope: Envelope) -> None:
        with self._lock:
            if self._closed:
                return
            if len(self._queue) >= self._maxlen:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(envelope)

    def pop(self) -> Envelope | None:
        with self._lock:
            return self._queue.popleft() if self._queue else None

    def drain(self) -> list[Envelope]:
        with self._lock:
            items = list(self._queue)
            self._queue.clear()
            return items

    def __len__(self) -> int:
        with self._lock:
            return len(self._queue)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._queue.clear()


@dataclass
class _TopicState:
    topic: Topic
    sequence: int = 0
    publish_count: int = 0
    subscribers: list[Subscription] = field(default_factory=list)


class Bus:
    """Topic registry plus publish/subscribe. Safe to share across threads."""

    def __init__(self, name: str, clock=None, *, registry: "BusRegistry | None" = None) -> None:
        if not name:
            raise BusError("bus name must be non-empty")
        self.name = name
        self.clock = clock if clock is not None else MonotonicClock()
        self._registry = registry
        self._topics: dict[str, _TopicState] = {}
        self._lock = threading.RLock()

    def register_topic(self, name: str, kind: TopicKind, schema: Schema) -> Topic:
        if not name:
            raise BusError("topic name must be non-empty")
        with self._lock:
            state = self._topics.get(name)
            if state is not None:
                existing = state.topic
                if existing.kind is not kind or existing.schema.key != schema.key:
                    raise BusError(
                        f"topic {name!r} already registered as {existing.kind.value} "
                        f"schema {existing.schema.id}v{existing.schema.version}"
                    )
                return existing
            topic = Topic(name=name, kind=kind, schema=schema)
            self._topics[name] = _TopicState(topic=topic)
            return topic

    def topic(self, name: str) -> Topic:
        return self._state(name).topic

    def has_topic(self, name: str) -> bool:
        with self._lock:
            return name in self._topics

    def topics(self, kind: TopicKind | None = None) -> list[Topic]:
        with self._lock:
            all_topics = [s.topic for s in self._topics.values()]
        if kind is None:
            return all_topics
        return [t for t in all_topics if t.kind is kind]

    def _state(self, name: str) -> _TopicState:
        with self._lock:
            state = self._topics.get(name)
        if state is None:
            raise BusError(f"topic {name!r} is not registered on bus {self.name!r}")
        return state

    def publish(self, topic_name: str, record: Mapping[str, Any]) -> int:
        """Encode ``record`` under the topic schema and fan out. Returns sequence."""
        state = self._state(topic_name)
        payload = state.topic.schema.encode(record)
        return self._deliver(state, payload)

    def publish_bytes(
        self, topic_name: str, payload: bytes, schema_id: int, schema_version: int
    ) -> int:
        """Publish pre-encoded payload bytes unchanged (relay/replay path).

        The (id, version) pair must match the topic schema and the payload
        must decode cleanly; otherwise the envelope is rejected here.
        """
        state = self._state(topic_name)
        schema = state.topic.schema
        if (schema_id, schema_version) != schema.key:
            raise SchemaMismatchError(
                f"topic {topic_name!r} expects schema {schema.id}v{schema.version}, "
                f"got {schema_id}v{schema_version}"
            )
        schema.decode(payload)  # reject undecodable envelopes at publish time
        return self._deliver(state, payload)

    def _deliver(self, state: _TopicState, payload: bytes) -> int:
        with self._lock:
            state.sequence += 1
            state.publish_count += 1
            envelope = Envelope(
                topic=state.topic,
                schema_id=state.topic.schema.id,
                schema_version=state.topic.schema.version,
                sequence=state.sequence,
                timestamp_ns=self.clock.now_ns,
                payload=payload,
            )
            subscribers = list(state.subscribers)
        for sub in subscribers:
            sub._offer(envelope)
        return envelope.sequence

    def subscribe(self, topic_name: str, maxlen: int = DEFAULT_QUEUE_DEPTH) -> Subscription:
        state = self._state(topic_name)
        sub = Subscription(state.topic, maxlen)
        with self._lock:
            state.subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            state = self._topics.get(sub.topic.name)
            if state is not None and sub in state.subscribers:
                state.subscribers.remove(sub)
        sub.close()

    def stats(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {
                name: {
                    "published": s.publish_count,
                    "subscribers": len(s.subscribers),
                    "dropped": sum(sub.dropped for sub in s.subscribers),
                }
                for name, s in self._topics.items()
            }

    def close(self) -> None:
        with self._lock:
            for state in self._topics.values():
                for sub in state.subscribers:
                    sub.close()
                state.subscribers.clear()
        if self._registry is not None:
            self._registry._release(self.name)
            self._registry = None


class BusRegistry:
    """Scope of bus-name uniqueness; compositions own a private one."""

    def __init__(self) -> None:
        self._buses: dict[str, Bus] = {}
        self._lock = threading.Lock()

    def create_bus(self, name: str, clock=None) -> Bus:
        if not name:
            raise BusError("bus name must be non-empty")
        with self._lock:
            if name in self._buses:
                raise BusError(f"bus {name!r} already exists")
            bus = Bus(name, clock, registry=self)
            self._buses[name] = bus
            return bus

    def _release(self, name: str) -> None:
        with self._lock:
            self._buses.pop(name, None)

    def get(self, name: str) -> Bus | None:
        with self._lock:
            return self._buses.get(name)

    def names(self) -> Iterable[str]:
        with self._lock:
            return list(self._buses)

    def close_all(self) -> None:
        with self._lock:
            buses = list(self._buses.values())
        for bus in buses:
            bus.close()


_default_registry = BusRegistry()


def create_bus(name: str, clock=None, registry: BusRegistry | None = None) -> Bus:
    """Create a uniquely named bus (process-default registry unless given)."""
    return (registry or _default_registry).create_bus(name, clock)
