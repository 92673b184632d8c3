"""Binary codec: layout, ranges, round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twincar.errors import DecodeError, EncodeError, SchemaError
from twincar.messaging.codec import Field, FieldType, Schema
from twincar.protocol import (
    DRIVE_COMMAND_SCHEMA,
    DRIVE_STATUS_SCHEMA,
    FAULT_SCHEMA,
    JOINT_COMMAND_SCHEMA,
    POSE_SCHEMA,
)

ALL_INTS = Schema(
    id=200,
    version=1,
    name="ints",
    fields=(
        Field("b", FieldType.BOOL),
        Field("u8", FieldType.U8),
        Field("u16", FieldType.U16),
        Field("i16", FieldType.I16),
        Field("u32", FieldType.U32),
        Field("i32", FieldType.I32),
        Field("u64", FieldType.U64),
    ),
)

MIXED = Schema(
    id=201,
    version=1,
    name="mixed",
    fields=(
        Field("f", FieldType.F64),
        Field("raw", FieldType.BYTES, length=4),
        Field("s", FieldType.STRING),
    ),
)


def test_drive_status_payload_is_16_bytes():
    assert DRIVE_STATUS_SCHEMA.fixed_size() == 16
    payload = DRIVE_STATUS_SCHEMA.encode(
        {
            "motor_left_pulse": 0,
            "motor_right_pulse": 0,
            "motor_left_dir": 0,
            "motor_right_dir": 0,
            "steering_pulse": 1500,
            "timestamp_ns": 0,
        }
    )
    assert len(payload) == 16


def test_drive_command_payload_is_13_bytes():
    assert DRIVE_COMMAND_SCHEMA.fixed_size() == 13


def test_drive_status_golden_bytes():
    # Layout worked out by hand: u16 u16 u8 u8 u16 u64, big-endian.
    record = {
        "motor_left_pulse": 4095,
        "motor_right_pulse": 4095,
        "motor_left_dir": 1,
        "motor_right_dir": 0,
        "steering_pulse": 1500,
        "timestamp_ns": 123456789,
    }
    assert DRIVE_STATUS_SCHEMA.encode(record).hex() == "0fff0fff010005dc00000000075bcd15"


def test_big_endian_ordering():
    schema = Schema(id=202, version=1, name="be", fields=(Field("v", FieldType.U16),))
    assert schema.encode({"v": 0x1234}) == b"\x12\x34"


def test_decode_inverts_encode_on_known_records():
    samples = [
        (
            DRIVE_COMMAND_SCHEMA,
            {"steering_angle_centideg": -2000, "speed_permille": 1000, "direction": 1, "timestamp_ns": 7},
        ),
        (JOINT_COMMAND_SCHEMA, {"joint": 2, "value": -23.5, "timestamp_ns": 3}),
        (POSE_SCHEMA, {"x": 1.0, "y": -0.5, "z": 0.0, "timestamp_ns": 99}),
        (FAULT_SCHEMA, {"source": 1, "code": 2, "detail": "pulse 42 µs out of range", "timestamp_ns": 1}),
    ]
    for schema, record in samples:
        assert schema.decode(schema.encode(record)) == record


def test_string_utf8_length_prefix():
    payload = FAULT_SCHEMA.encode({"source": 0, "code": 0, "detail": "é", "timestamp_ns": 0})
    # u8 + u8 + (u16 len + 2 utf-8 bytes) + u64
    assert len(payload) == 1 + 1 + 2 + 2 + 8
    assert payload[2:4] == b"\x00\x02"


def test_missing_field_rejected():
    with pytest.raises(EncodeError, match="missing field"):
        JOINT_COMMAND_SCHEMA.encode({"joint": 0, "value": 1.0})


def test_extra_field_rejected():
    with pytest.raises(EncodeError, match="unexpected fields"):
        JOINT_COMMAND_SCHEMA.encode({"joint": 0, "value": 1.0, "timestamp_ns": 0, "bogus": 1})


@pytest.mark.parametrize(
    "field_type,value",
    [
        (FieldType.U8, 256),
        (FieldType.U8, -1),
        (FieldType.U16, 65536),
        (FieldType.I16, 0x8000),
        (FieldType.U64, -5),
    ],
)
def test_integer_range_enforced(field_type, value):
    schema = Schema(id=203, version=1, name="rng", fields=(Field("v", field_type),))
    with pytest.raises(EncodeError, match="range"):
        schema.encode({"v": value})


def test_bool_must_be_bool_and_ints_must_be_int():
    schema = Schema(
        id=204, version=1, name="types", fields=(Field("b", FieldType.BOOL), Field("n", FieldType.U8))
    )
    with pytest.raises(EncodeError):
        schema.encode({"b": 1, "n": 0})
    with pytest.raises(EncodeError):
        schema.encode({"b": True, "n": 1.5})
    with pytest.raises(EncodeError):
        schema.encode({"b": True, "n": True})  # bool is not an acceptable int


def test_f64_rejects_non_finite():
    with pytest.raises(EncodeError, match="non-finite"):
        JOINT_COMMAND_SCHEMA.encode({"joint": 0, "value": float("nan"), "timestamp_ns": 0})


def test_truncated_payload_rejected():
    payload = DRIVE_STATUS_SCHEMA.encode(
        {
            "motor_left_pulse": 1,
            "motor_right_pulse": 2,
            "motor_left_dir": 0,
            "motor_right_dir": 1,
            "steering_pulse": 777,
            "timestamp_ns": 5,
        }
    )
    with pytest.raises(DecodeError, match="truncated"):
        DRIVE_STATUS_SCHEMA.decode(payload[:-1])


def test_trailing_bytes_rejected():
    payload = JOINT_COMMAND_SCHEMA.encode({"joint": 0, "value": 0.0, "timestamp_ns": 0})
    with pytest.raises(DecodeError, match="trailing"):
        JOINT_COMMAND_SCHEMA.decode(payload + b"\x00")


def test_truncated_string_rejected():
    payload = FAULT_SCHEMA.encode({"source": 0, "code": 0, "detail": "hello", "timestamp_ns": 0})
    with pytest.raises(DecodeError):
        FAULT_SCHEMA.decode(payload[:5])


def test_schema_validation():
    with pytest.raises(SchemaError):
        Schema(id=300, version=1, name="bad-id", fields=(Field("v", FieldType.U8),))
    with pytest.raises(SchemaError):
        Schema(id=1, version=1, name="dup", fields=(Field("v", FieldType.U8), Field("v", FieldType.U8)))
    with pytest.raises(SchemaError):
        Field("raw", FieldType.BYTES)  # bytes need a length
    with pytest.raises(SchemaError):
        Field("v", FieldType.U8, length=2)  # length only for bytes


@settings(max_examples=200, deadline=None)
@given(
    b=st.booleans(),
    u8=st.integers(0, 0xFF),
    u16=st.integers(0, 0xFFFF),
    i16=st.integers(-0x8000, 0x7FFF),
    u32=st.integers(0, 0xFFFF_FFFF),
    i32=st.integers(-0x8000_0000, 0x7FFF_FFFF),
    u64=st.integers(0, 0xFFFF_FFFF_FFFF_FFFF),
)
def test_integer_round_trip_property(b, u8, u16, i16, u32, i32, u64):
    record = {"b": b, "u8": u8, "u16": u16, "i16": i16, "u32": u32, "i32": i32, "u64": u64}
    assert ALL_INTS.decode(ALL_INTS.encode(record)) == record


@settings(max_examples=200, deadline=None)
@given(
    f=st.floats(allow_nan=False, allow_infinity=False),
    raw=st.binary(min_size=4, max_size=4),
    s=st.text(max_size=64),
)
def test_mixed_round_trip_property(f, raw, s):
    record = {"f": f, "raw": raw, "s": s}
    decoded = MIXED.decode(MIXED.encode(record))
    assert decoded["raw"] == raw and decoded["s"] == s
    assert decoded["f"] == f or (decoded["f"] != decoded["f"] and f != f)


def test_fixed_size_none_with_strings():
    assert FAULT_SCHEMA.fixed_size() is None
