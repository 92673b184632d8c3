"""Wire-level contract shared by every node: schemas, topic names, joint ids.

Schema layouts are frozen; changing one means bumping its version, and
version mismatches are rejected rather than migrated.
"""

from enum import Enum

from .messaging.codec import Field, FieldType, Schema

# Topics exchanged between the vehicle software and the twin side.
DRIVE_COMMAND_TOPIC = "picarx/drive/command"
DRIVE_STATUS_TOPIC = "picarx/drive/status"
FAULT_TOPIC = "sys/fault"
POSE_TOPIC = "sim/pose/rear_right"
JOINT_TOPIC_PREFIX = "sim/joint/"


class Joint(Enum):
    REAR_LEFT_WHEEL = 0
    REAR_RIGHT_WHEEL = 1
    STEERING_LEFT = 2
    STEERING_RIGHT = 3

    @property
    def topic(self) -> str:
        return JOINT_TOPIC_PREFIX + self.name.lower()


JOINT_TOPICS = tuple(j.topic for j in Joint)

# motor pulse widths + directions + steering pulse; 16 payload bytes.
DRIVE_STATUS_SCHEMA = Schema(
    id=1,
    version=1,
    name="drive_status",
    fields=(
        Field("motor_left_pulse", FieldType.U16),
        Field("motor_right_pulse", FieldType.U16),
        Field("motor_left_dir", FieldType.U8),
        Field("motor_right_dir", FieldType.U8),
        Field("steering_pulse", FieldType.U16),
        Field("timestamp_ns", FieldType.U64),
    ),
)

# signed steering angle, speed fraction, travel direction; 13 payload bytes.
DRIVE_COMMAND_SCHEMA = Schema(
    id=2,
    version=1,
    name="drive_command",
    fields=(
        Field("steering_angle_centideg", FieldType.I16),
        Field("speed_permille", FieldType.U16),
        Field("direction", FieldType.U8),  # 0=forward, 1=backward
        Field("timestamp_ns", FieldType.U64),
    ),
)

JOINT_COMMAND_SCHEMA = Schema(
    id=3,
    version=1,
    name="joint_command",
    fields=(
        Field("joint", FieldType.U8),
        Field("value", FieldType.F64),  # rad/s for wheels, degrees for steering
        Field("timestamp_ns", FieldType.U64),
    ),
)

POSE_SCHEMA = Schema(
    id=4,
    version=1,
    name="pose",
    fields=(
        Field("x", FieldType.F64),
        Field("y", FieldType.F64),
        Field("z", FieldType.F64),
        Field("timestamp_ns", FieldType.U64),
    ),
)

FAULT_SCHEMA = Schema(
    id=5,
    version=1,
    name="fault",
    fields=(
        Field("source", FieldType.U8),
        Field("code", FieldType.U8),
        Field("detail", FieldType.STRING),
        Field("timestamp_ns", FieldType.U64),
    ),
)

# Reserved id for dumps of raw hardware writes.
HAL_WRITE_SCHEMA = Schema(
    id=15,
    version=1,
    name="hal_write",
    fields=(
        Field("kind", FieldType.U8),  # 0=gpio, 1=i2c
        Field("chip", FieldType.U8),
        Field("register", FieldType.U8),
        Field("value", FieldType.U16),
        Field("timestamp_ns", FieldType.U64),
    ),
)

HAL_WRITE_TOPIC = "hal/write"


class FaultSource(Enum):
    SERVO_EMULATOR = 1
    MOTOR_EMULATOR = 2
    CONTROL_DISTRIBUTOR = 3
    DATA_DISTRIBUTOR = 4
    DRIVE_MONITOR = 5


class FaultCode(Enum):
    BAD_PULSE = 1
    UNKNOWN_TOPIC = 2
    MALFORMED_MESSAGE = 3
