"""Schema-driven compact binary codec.

Payload layout is fully determined by the schema: fixed-width fields packed
in declaration order, multi-byte integers big-endian, no field tags. Strings
are the only variable-width type and carry a u16 length prefix. Decoding with
bytes produced under a different layout fails loudly (length mismatch); the
(id, version) pair is additionally checked wherever it travels next to the
payload (envelopes, wire frames, trace records).
"""

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from ..errors import DecodeError, EncodeError, SchemaError


class FieldType(Enum):
    BOOL = "bool"
    U8 = "u8"
    U16 = "u16"
    I16 = "i16"
    U32 = "u32"
    I32 = "i32"
    U64 = "u64"
    F64 = "f64"
    BYTES = "bytes"
    STRING = "string"


_INT_RANGES = {
    FieldType.U8: (0, 0xFF),
    FieldType.U16: (0, 0xFFFF),
    FieldType.I16: (-0x8000, 0x7FFF),
    FieldType.U32: (0, 0xFFFF_FFFF),
    FieldType.I32: (-0x8000_0000, 0x7FFF_FFFF),
    FieldType.U64: (0, 0xFFFF_FFFF_FFFF_FFFF),
}

_STRUCT_FMT = {
    FieldType.U8: ">B",
    FieldType.U16: ">H",
    FieldType.I16: ">h",
    FieldType.U32: ">I",
    FieldType.I32: ">i",
    FieldType.U64: ">Q",
    FieldType.F64: ">d",
}


@dataclass(frozen=True)
class Field:
    name: str
    type: FieldType
    length: int | None = None  # BYTES only

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("field name must be non-empty")
        if self.type is FieldType.BYTES:
            if self.length is None or self.length <= 0:
                raise SchemaError(f"byte-array field {self.name!r} needs a positive length")
        elif self.length is not None:
            raise SchemaError(f"field {self.name!r}: length only applies to byte arrays")


@dataclass(frozen=True)
class Schema:
    """(id, version) plus an ordered field layout."""

    id: int
    version: int
    name: str
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        if not 0 <= self.id <= 0xFF:
            raise SchemaError(f"schema id {self.id} out of u8 range")
        if not 0 <= self.version <= 0xFF:
            raise SchemaError(f"schema version {self.version} out of u8 range")
        if not self.fields:
            raise SchemaError("schema needs at least one field")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate field names in schema {self.name!r}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.id, self.version)

    def fixed_size(self) -> int | None:
        """Encoded size in bytes, or None when the schema contains strings."""
        total = 0
        for f in self.fields:
            if f.type is FieldType.STRING:
                return None
            total += f.length if f.type is FieldType.BYTES else struct.calcsize(_STRUCT_FMT.get(f.type, ">B"))
        return total

    def encode(self, record: Mapping[str, Any]) -> bytes:
        extra = set(record) - {f.name for f in self.fields}
        if extra:
            raise EncodeError(f"schema {self.name!r}: unexpected fields {sorted(extra)}")
        out = bytearray()
        for f in self.fields:
            if f.name not in record:
                raise EncodeError(f"schema {self.name!r}: missing field {f.name!r}")
            out += _encode_value(f, record[f.name], self.name)
        return bytes(out)

    def decode(self, payload: bytes) -> dict[str, Any]:
        record: dict[str, Any] = {}
        offset = 0
        for f in self.fields:
            value, offset = _decode_value(f, payload, offset, self.name)
            record[f.name] = value
        if offset != len(payload):
            raise DecodeError(
                f"schema {self.name!r}: {len(payload) - offset} trailing bytes after decode"
            )
        return record


def _encode_value(field: Field, value: Any, schema_name: str) -> bytes:
    t = field.type
    if t is FieldType.BOOL:
        if not isinstance(value, bool):
            raise EncodeError(f"{schema_name}.{field.name}: expected bool, got {type(value).__name__}")
        return b"\x01" if value else b"\x00"
    if t in _INT_RANGES:
        if isinstance(value, bool) or not isinstance(value, int):
            raise EncodeError(f"{schema_name}.{field.name}: expected int, got {type(value).__name__}")
        lo, hi = _INT_RANGES[t]
        if not lo <= value <= hi:
            raise EncodeError(f"{schema_name}.{field.name}: {value} outside {t.value} range")
        return struct.pack(_STRUCT_FMT[t], value)
    if t is FieldType.F64:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EncodeError(f"{schema_name}.{field.name}: expected number, got {type(value).__name__}")
        value = float(value)
        if not math.isfinite(value):
            raise EncodeError(f"{schema_name}.{field.name}: non-finite value {value!r}")
        return struct.pack(">d", value)
    if t is FieldType.BYTES:
        if not isinstance(value, (bytes, bytearray)):
            raise EncodeError(f"{schema_name}.{field.name}: expected bytes")
        if len(value) != field.length:
            raise EncodeError(
                f"{schema_name}.{field.name}: expected {field.length} bytes, got {len(value)}"
            )
        return bytes(value)
    if t is FieldType.STRING:
        if not isinstance(value, str):
            raise EncodeError(f"{schema_name}.{field.name}: expected str")
        raw = value.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EncodeError(f"{schema_name}.{field.name}: string longer than 65535 bytes")
        return struct.pack(">H", len(raw)) + raw
    raise SchemaError(f"unhandled field type {t!r}")


def _decode_value(field: Field, payload: bytes, offset: int, schema_name: str) -> tuple[Any, int]:
    t = field.type

    def take(n: int) -> bytes:
        if offset + n > len(payload):
            raise DecodeError(f"schema {schema_name!r}: truncated at field {field.name!r}")
        return payload[offset : offset + n]

    if t is FieldType.BOOL:
        raw = take(1)
        if raw[0] not in (0, 1):
            raise DecodeError(f"{schema_name}.{field.name}: invalid bool byte {raw[0]}")
        return raw[0] == 1, offset + 1
    if t in _STRUCT_FMT and t is not FieldType.F64:
        size = struct.calcsize(_STRUCT_FMT[t])
        return struct.unpack(_STRUCT_FMT[t], take(size))[0], offset + size
    if t is FieldType.F64:
        return struct.unpack(">d", take(8))[0], offset + 8
    if t is FieldType.BYTES:
        assert field.length is not None
        return bytes(take(field.length)), offset + field.length
    if t is FieldType.STRING:
        (n,) = struct.unpack(">H", take(2))
        raw = payload[offset + 2 : offset + 2 + n]
        if len(raw) != n:
            raise DecodeError(f"schema {schema_name!r}: truncated string in field {field.name!r}")
        try:
            return raw.decode("utf-8"), offset + 2 + n
        except UnicodeDecodeError as exc:
            raise DecodeError(f"{schema_name}.{field.name}: invalid UTF-8") from exc
    raise SchemaError(f"unhandled field type {t!r}")


def encode(schema: Schema, record: Mapping[str, Any]) -> bytes:
    return schema.encode(record)


def decode(schema: Schema, payload: bytes) -> dict[str, Any]:
    return schema.decode(payload)
