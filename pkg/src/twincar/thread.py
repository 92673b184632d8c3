"""Digital-thread relay nodes between the vehicle-side and twin-side buses.

Four periodic nodes, two per side, split by message kind:

             vehicle (PT) bus                twin (DT) bus
  Data:    DataCollector --> bridge --> DataDistributor
  Command: ControlDistributor <-- bridge <-- ControlCollector

Only topics present in the bridge's topic map cross the wire; everything
else stays local to its bus. The kind partition doubles as loop
prevention: a relay never re-forwards what its counterpart just published,
because that envelope is always of the other kind.

Envelope payloads are forwarded as the exact bytes that were published —
serialize-on-send happened at the bus, so what arrives on the far bus is
bitwise what left the near one.
"""

from collections import deque

from .clock import Scheduler
from .errors import BridgeDisconnectedError, SchemaError, WireError
from .messaging.bus import Bus, Subscription, TopicKind
from .protocol import FAULT_TOPIC, FaultCode, FaultSource
from .wire import Bridge, TopicMap, WireFrame

RELAY_BUFFER_FRAMES = 4096
DEFAULT_RELAY_PERIOD_S = 0.010


def build_topic_map(bus: Bus, topic_names: list[str]) -> TopicMap:
    """Topic map for the given bus topics; ids derived from names alone,
    so two buses registering the same names produce identical maps."""
    return TopicMap.from_topics([bus.topic(name) for name in topic_names])


class _RelayNode:
    def __init__(self, name: str) -> None:
        self.name = name

    def step(self) -> None:
        raise NotImplementedError

    def attach(self, scheduler: Scheduler, period_s: float = DEFAULT_RELAY_PERIOD_S, order: int = 50) -> None:
        scheduler.add_periodic(self.name, round(period_s * 1e9), self.step, order=order)


class _OutboundRelay(_RelayNode):
    """Bus → bridge for one message kind. Buffers while the link is down."""

    def __init__(self, name: str, bus: Bus, bridge: Bridge, kind: TopicKind) -> None:
        super().__init__(name)
        self._bus = bus
        self._bridge = bridge
        self.kind = kind
        self._pending: deque[WireFrame] = deque()
        self.forwarded_frames = 0
        self.dropped_frames = 0
        self._subs: list[Subscription] = [
            bus.subscribe(topic.name)
            for topic in bus.topics(kind)
            if topic.name in bridge.topic_map
        ]

    @property
    def buffered_frames(self) -> int:
        return len(self._pending)

    def step(self) -> None:
        envelopes = [env for sub in self._subs for env in sub.drain()]
        # Publish order: bus timestamps are strictly per-tick, sequence
        # numbers order messages within a topic.
        envelopes.sort(key=lambda env: (env.timestamp_ns, env.sequence))
        for env in envelopes:
            frame = WireFrame(
                topic_id=self._bridge.topic_map.id_for(env.topic.name),
                schema_id=env.schema_id,
                schema_version=env.schema_version,
                payload=env.payload,
            )
            if len(self._pending) >= RELAY_BUFFER_FRAMES:
                self._pending.popleft()
                self.dropped_frames += 1
            self._pending.append(frame)
        while self._pending and self._bridge.connected:
            frame = self._pending.popleft()
            try:
                self._bridge.send(frame)
            except BridgeDisconnectedError:
                self._pending.appendleft(frame)
                break
            self.forwarded_frames += 1


class _InboundRelay(_RelayNode):
    """Bridge → bus for one message kind. Bad frames become fault events."""

    def __init__(self, name: str, bus: Bus, bridge: Bridge, kind: TopicKind, fault_source: FaultSource) -> None:
        super().__init__(name)
        self._bus = bus
        self._bridge = bridge
        self.kind = kind
        self._fault_source = fault_source
        self.delivered_frames = 0
        self.discarded_frames = 0

    def _fault(self, code: FaultCode, detail: str) -> None:
        self.discarded_frames += 1
        self._bus.publish(
            FAULT_TOPIC,
            {
                "source": self._fault_source.value,
                "code": code.value,
                "detail": detail,
                "timestamp_ns": self._bus.clock.now_ns,
            },
        )

    def step(self) -> None:
        for frame in self._bridge.receive():
            topic_map = self._bridge.topic_map
            if not topic_map.has_id(frame.topic_id):
                self._fault(FaultCode.UNKNOWN_TOPIC, f"unmapped topic id {frame.topic_id}")
                continue
            if TopicMap.kind_of(frame.topic_id) is not self.kind:
                # The other direction's traffic never reaches this node when
                # both endpoints behave; seeing it means a confused peer.
                self._fault(
                    FaultCode.UNKNOWN_TOPIC,
                    f"{topic_map.kind_of(frame.topic_id).value} frame on a {self.kind.value} relay",
                )
                continue
            name = topic_map.name_for(frame.topic_id)
            try:
                self._bus.publish_bytes(name, frame.payload, frame.schema_id, frame.schema_version)
            except (SchemaError, WireError) as exc:
                self._fault(FaultCode.MALFORMED_MESSAGE, f"{name}: {exc}")
                continue
            self.delivered_frames += 1


class DataCollector(_OutboundRelay):
    """Vehicle side: forwards Data envelopes (status) toward the twin."""

    def __init__(self, pt_bus: Bus, bridge: Bridge) -> None:
        super().__init__("ds-data-collector", pt_bus, bridge, TopicKind.DATA)


class ControlDistributor(_InboundRelay):
    """Vehicle side: publishes arriving Command frames onto the vehicle bus."""

    def __init__(self, pt_bus: Bus, bridge: Bridge) -> None:
        super().__init__(
            "ds-control-distributor", pt_bus, bridge, TopicKind.COMMAND, FaultSource.CONTROL_DISTRIBUTOR
        )


class DataDistributor(_InboundRelay):
    """Twin side: publishes arriving Data frames onto the twin bus."""

    def __init__(self, dt_bus: Bus, bridge: Bridge) -> None:
        super().__init__(
            "ds-data-distributor", dt_bus, bridge, TopicKind.DATA, FaultSource.DATA_DISTRIBUTOR
        )


class ControlCollector(_OutboundRelay):
    """Twin side: forwards Command envelopes toward the vehicle."""

    def __init__(self, dt_bus: Bus, bridge: Bridge) -> None:
        super().__init__("ds-control-collector", dt_bus, bridge, TopicKind.COMMAND)
