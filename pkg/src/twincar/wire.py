"""Framed point-to-point wire protocol between the two buses.

A frame is a length-prefixed blob: u32 length, u16 topic id, u8 schema id,
u8 schema version, payload — all big-endian, self-delimiting on a byte
stream. Topic names never travel with data; both endpoints agree on a
numeric topic map during the handshake (magic ``TWBR``), with Data topics
in ids 0–32767 and Command topics in 32768–65535 so a relay can tell the
direction of a frame from the id alone.

Two transports: an in-process loopback pair for deterministic tests and a
TCP client/listener for running the two halves in separate processes.
"""

import select
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import (
    BridgeDisconnectedError,
    FrameTooLargeError,
    HandshakeError,
    WireError,
)
from .messaging.bus import Topic, TopicKind

WIRE_MAGIC = b"TWBR"
WIRE_VERSION = 1
MAX_FRAME_BYTES = 1 << 20  # refuse anything larger than 1 MiB
COMMAND_ID_BASE = 0x8000

_FRAME_HEADER = struct.Struct(">IHBB")  # length, topic_id, schema_id, schema_version


@dataclass(frozen=True)
class WireFrame:
    topic_id: int
    schema_id: int
    schema_version: int
    payload: bytes

    @property
    def length(self) -> int:
        """Value of the wire length field: everything after the length prefix."""
        return 2 + 1 + 1 + len(self.payload)


def encode_frame(frame: WireFrame) -> bytes:
    if not 0 <= frame.topic_id <= 0xFFFF:
        raise WireError(f"topic_id {frame.topic_id} not a u16")
    if frame.length > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {frame.length} bytes exceeds {MAX_FRAME_BYTES}")
    return (
        _FRAME_HEADER.pack(frame.length, frame.topic_id, frame.schema_id, frame.schema_version)
        + frame.payload
    )


class FrameDecoder:
    """Reassembles frames from an arbitrarily chunked byte stream."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[WireFrame]:
        self._buffer.extend(data)
        frames = []
        while True:
            if len(self._buffer) < 4:
                break
            (length,) = struct.unpack_from(">I", self._buffer)
            if length < 4:
                raise WireError(f"declared frame length {length} below minimum header size")
            if length > MAX_FRAME_BYTES:
                raise FrameTooLargeError(f"declared frame length {length} exceeds {MAX_FRAME_BYTES}")
            if len(self._buffer) < 4 + length:
                break
            topic_id, schema_id, schema_version = struct.unpack_from(">HBB", self._buffer, 4)
            payload = bytes(self._buffer[8 : 4 + length])
            del self._buffer[: 4 + length]
            frames.append(WireFrame(topic_id, schema_id, schema_version, payload))
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)


class TopicMap:
    """Bidirectional topic name ↔ id map, kind-partitioned by id range."""

    def __init__(self, name_to_id: dict[str, int]) -> None:
        ids = list(name_to_id.values())
        if len(set(ids)) != len(ids):
            raise WireError("duplicate topic ids in map")
        for name, topic_id in name_to_id.items():
            if not 0 <= topic_id <= 0xFFFF:
                raise WireError(f"topic id {topic_id} for {name!r} not a u16")
        self._name_to_id = dict(name_to_id)
        self._id_to_name = {i: n for n, i in name_to_id.items()}

    @classmethod
    def from_topics(cls, topics: Iterable[Topic]) -> "TopicMap":
        """Assign ids deterministically: sorted names, Data from 0, Command from 0x8000."""
        data = sorted(t.name for t in topics if t.kind is TopicKind.DATA)
        command = sorted(t.name for t in topics if t.kind is TopicKind.COMMAND)
        if len(data) > COMMAND_ID_BASE or len(command) > COMMAND_ID_BASE:
            raise WireError("too many topics for the id space")
        mapping = {name: i for i, name in enumerate(data)}
        mapping.update({name: COMMAND_ID_BASE + i for i, name in enumerate(command)})
        return cls(mapping)

    def id_for(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise WireError(f"topic {name!r} not in map") from None

    def name_for(self, topic_id: int) -> str:
        try:
            return self._id_to_name[topic_id]
        except KeyError:
            raise WireError(f"topic id {topic_id} not in map") from None

    def __contains__(self, name: str) -> bool:
        return name in self._name_to_id

    def has_id(self, topic_id: int) -> bool:
        return topic_id in self._id_to_name

    @staticmethod
    def kind_of(topic_id: int) -> TopicKind:
        return TopicKind.COMMAND if topic_id >= COMMAND_ID_BASE else TopicKind.DATA

    def names(self) -> dict[str, int]:
        return dict(self._name_to_id)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TopicMap) and self._name_to_id == other._name_to_id

    def __len__(self) -> int:
        return len(self._name_to_id)


def encode_handshake(topic_map: TopicMap) -> bytes:
    entries = sorted(topic_map.names().items(), key=lambda kv: kv[1])
    out = bytearray(WIRE_MAGIC)
    out += struct.pack(">HH", WIRE_VERSION, len(entries))
    for name, topic_id in entries:
        raw = name.encode("utf-8")
        out += struct.pack(">HH", topic_id, len(raw)) + raw
    return bytes(out)


class HandshakeDecoder:
    """Incremental handshake parser; returns the map once fully received."""

    def __init__(self) -> None:
        self._buffer = bytearray()
        self.leftover = b""  # stream bytes that arrived after the handshake

    def feed(self, data: bytes) -> TopicMap | None:
        self._buffer.extend(data)
        buf = self._buffer
        if len(buf) < 8:
            return None
        if bytes(buf[:4]) != WIRE_MAGIC:
            raise HandshakeError(f"bad handshake magic {bytes(buf[:4])!r}")
        version, count = struct.unpack_from(">HH", buf, 4)
        if version != WIRE_VERSION:
            raise HandshakeError(f"protocol version {version} != {WIRE_VERSION}")
        offset = 8
        mapping: dict[str, int] = {}
        for _ in range(count):
            if len(buf) < offset + 4:
                return None
            topic_id, name_len = struct.unpack_from(">HH", buf, offset)
            offset += 4
            if len(buf) < offset + name_len:
                return None
            mapping[bytes(buf[offset : offset + name_len]).decode("utf-8")] = topic_id
            offset += name_len
        self.leftover = bytes(buf[offset:])
        return TopicMap(mapping)


class Bridge:
    """Transport interface the relay nodes talk to."""

    topic_map: TopicMap

    def send(self, frame: WireFrame) -> None:
        raise NotImplementedError

    def receive(self) -> list[WireFrame]:
        """Drain whatever frames have arrived; never blocks."""
        raise NotImplementedError

    @property
    def connected(self) -> bool:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _LoopbackLink:
    def __init__(self) -> None:
        self.up = True
        self.lock = threading.Lock()


class LoopbackBridge(Bridge):
    """In-process bridge: frames still round-trip through their byte encoding,
    so everything the TCP path would reveal (framing bugs, payload mutation)
    shows up here too. ``cut()``/``restore()`` simulate link loss.
    """

    def __init__(self, topic_map: TopicMap, link: _LoopbackLink) -> None:
        self.topic_map = topic_map
        self._link = link
        self._peer: "LoopbackBridge | None" = None
        self._decoder = FrameDecoder()
        self._inbox: deque[bytes] = deque()
        self.sent_frames = 0
        self.received_frames = 0
        self._closed = False

    @classmethod
    def pair(cls, topic_map: TopicMap) -> tuple["LoopbackBridge", "LoopbackBridge"]:
        link = _LoopbackLink()
        a, b = cls(topic_map, link), cls(topic_map, link)
        a._peer, b._peer = b, a
        return a, b

    @property
    def connected(self) -> bool:
        return self._link.up and not self._closed

    def cut(self) -> None:
        self._link.up = False

    def restore(self) -> None:
        self._link.up = True

    def send(self, frame: WireFrame) -> None:
        if not self.connected:
            raise BridgeDisconnectedError("loopback link is down")
        data = encode_frame(frame)
        with self._link.lock:
            assert self._peer is not None
            self._peer._inbox.append(data)
        self.sent_frames += 1

    def receive(self) -> list[WireFrame]:
        frames: list[WireFrame] = []
        with self._link.lock:
            chunks = list(self._inbox)
            self._inbox.clear()
        for chunk in chunks:
            frames.extend(self._decoder.feed(chunk))
        self.received_frames += len(frames)
        return frames

    def close(self) -> None:
        self._closed = True


class TcpBridge(Bridge):
    """One end of a TCP connection after a successful handshake."""

    def __init__(self, sock: socket.socket, topic_map: TopicMap, leftover: bytes = b"") -> None:
        self.topic_map = topic_map
        self._sock = sock
        self._decoder = FrameDecoder()
        if leftover:
            self._early = self._decoder.feed(leftover)
        else:
            self._early = []
        self._send_lock = threading.Lock()
        self._connected = True
        self.sent_frames = 0
        self.received_frames = 0

    @classmethod
    def connect(cls, host: str, port: int, topic_map: TopicMap, timeout_s: float = 5.0) -> "TcpBridge":
        sock = socket.create_connection((host, port), timeout=timeout_s)
        return cls._handshake(sock, topic_map, timeout_s)

    @classmethod
    def _handshake(cls, sock: socket.socket, topic_map: TopicMap, timeout_s: float) -> "TcpBridge":
        sock.settimeout(timeout_s)
        try:
            sock.sendall(encode_handshake(topic_map))
            decoder = HandshakeDecoder()
            while True:
                data = sock.recv(65536)
                if not data:
                    raise HandshakeError("peer closed during handshake")
                peer_map = decoder.feed(data)
                if peer_map is not None:
                    break
            if peer_map != topic_map:
                raise HandshakeError("topic maps differ between endpoints")
        except (HandshakeError, WireError):
            sock.close()
            raise
        except OSError as exc:
            sock.close()
            raise HandshakeError(f"handshake I/O failed: {exc}") from exc
        sock.settimeout(timeout_s)  # blocking sends; receive() polls via select
        return cls(sock, topic_map, decoder.leftover)

    @property
    def connected(self) -> bool:
        return self._connected

    def send(self, frame: WireFrame) -> None:
        if not self._connected:
            raise BridgeDisconnectedError("bridge closed")
        data = encode_frame(frame)
        try:
            with self._send_lock:
                self._sock.sendall(data)
        except OSError as exc:
            self._connected = False
            raise BridgeDisconnectedError(f"send failed: {exc}") from exc
        self.sent_frames += 1

    def receive(self) -> list[WireFrame]:
        frames = self._early
        self._early = []
        if not self._connected:
            return frames
        while True:
            readable, _, _ = select.select([self._sock], [], [], 0)
            if not readable:
                break
            try:
                data = self._sock.recv(65536)
            except OSError:
                self._connected = False
                break
            if not data:
                self._connected = False
                break
            frames.extend(self._decoder.feed(data))
        self.received_frames += len(frames)
        return frames

    def close(self) -> None:
        self._connected = False
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpListener:
    """Accepts bridge connections; one handshake per accepted socket."""

    def __init__(self, host: str, port: int, topic_map: TopicMap) -> None:
        self.topic_map = topic_map
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def accept(self, timeout_s: float = 5.0) -> TcpBridge:
        self._sock.settimeout(timeout_s)
        conn, _ = self._sock.accept()
        return TcpBridge._handshake(conn, self.topic_map, timeout_s)

    def close(self) -> None:
        self._sock.close()
