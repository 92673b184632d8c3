"""Embedded control software for the vehicle: servo + DC motor drivers and
the Ackermann steering skill.

The skill is the single command consumer: it clamps the steering angle,
drives both motors and the servo through the virtual hardware, and publishes
a consolidated ``DriveStatus`` event after every applied command. The same
code runs against emulated registers or recorded sessions; it cannot tell
the difference.
"""

from dataclasses import dataclass
from enum import Enum

from .clock import VirtualClock
from .errors import DriverError
from .hal import GpioPinBank, I2cRegisterFile, PWM_DUTY_MAX
from .messaging.bus import Bus, Subscription
from .protocol import DRIVE_COMMAND_TOPIC, DRIVE_STATUS_TOPIC

# Hobby-servo pulse convention: 500..2500 microseconds spans 0..180 degrees,
# 1500 (90 deg) is straight ahead. Exposed as constants, configurable nowhere
# else on purpose: drivers, emulators, and monitor must share one mapping.
SERVO_PULSE_MIN_US = 500
SERVO_PULSE_MAX_US = 2500
SERVO_RANGE_DEG = 180.0
SERVO_CENTER_DEG = 90.0
_US_PER_DEG = (SERVO_PULSE_MAX_US - SERVO_PULSE_MIN_US) / SERVO_RANGE_DEG

# Mechanically feasible steering range in the drive frame (0 = straight,
# negative = left). -40 is reachable, +40 is not.
STEER_MIN_DEG = -40.0
STEER_MAX_DEG = 40.0

# Under-steering guard: the skill never forwards angles beyond this.
DEFAULT_CLAMP_DEG = 20.0

SPEED_PERMILLE_MAX = 1000


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


class Direction(Enum):
    FORWARD = 0
    BACKWARD = 1


# The two motors are identical but mounted mirrored, so the right motor is
# electrically inverted: pin level 1 means forward on the left, backward on
# the right. Emulators import this table so driver and emulator stay inverses
# of each other by construction.
GPIO_FORWARD_LEVEL = {Side.LEFT: 1, Side.RIGHT: 0}


def direction_level(side: Side, direction: Direction) -> int:
    forward = GPIO_FORWARD_LEVEL[side]
    return forward if direction is Direction.FORWARD else 1 - forward


@dataclass(frozen=True)
class RegisterMap:
    """Where each actuator lives on the virtual hardware."""

    pwm_chip: int = 0x40
    left_duty_reg: int = 0x00
    right_duty_reg: int = 0x01
    steering_reg: int = 0x02
    left_dir_pin: int = 23
    right_dir_pin: int = 24

    def i2c_bounds(self) -> dict[tuple[int, int], tuple[int, int]]:
        return {
            (self.pwm_chip, self.left_duty_reg): (0, PWM_DUTY_MAX),
            (self.pwm_chip, self.right_duty_reg): (0, PWM_DUTY_MAX),
            (self.pwm_chip, self.steering_reg): (SERVO_PULSE_MIN_US, SERVO_PULSE_MAX_US),
        }

    def duty_reg(self, side: Side) -> int:
        return self.left_duty_reg if side is Side.LEFT else self.right_duty_reg

    def dir_pin(self, side: Side) -> int:
        return self.left_dir_pin if side is Side.LEFT else self.right_dir_pin


def angle_to_pulse(angle_deg: float) -> int:
    """Steering angle (drive frame, degrees) -> servo pulse width in µs."""
    if not STEER_MIN_DEG <= angle_deg < STEER_MAX_DEG:
        raise DriverError(
            f"steering angle {angle_deg} outside feasible [{STEER_MIN_DEG}, {STEER_MAX_DEG})"
        )
    return round(SERVO_PULSE_MIN_US + (angle_deg + SERVO_CENTER_DEG) * _US_PER_DEG)


def pulse_to_angle(pulse_us: int) -> float:
    """Servo pulse width in µs -> steering angle; inverse of angle_to_pulse."""
    if not SERVO_PULSE_MIN_US <= pulse_us <= SERVO_PULSE_MAX_US:
        raise DriverError(
            f"pulse {pulse_us} µs outside [{SERVO_PULSE_MIN_US}, {SERVO_PULSE_MAX_US}]"
        )
    return (pulse_us - SERVO_PULSE_MIN_US) / _US_PER_DEG - SERVO_CENTER_DEG


@dataclass(frozen=True)
class MotorSetting:
    side: Side
    direction: Direction
    duty: int

    def __post_init__(self) -> None:
        if not 0 <= self.duty <= PWM_DUTY_MAX:
            raise DriverError(f"duty {self.duty} outside 0..{PWM_DUTY_MAX}")


@dataclass(frozen=True)
class AckermannDriveCommand:
    """User-facing drive command: signed steering angle, speed fraction, direction."""

    steering_angle_deg: float
    speed: float
    direction: Direction = Direction.FORWARD

    def __post_init__(self) -> None:
        if not 0.0 <= self.speed <= 1.0:
            raise DriverError(f"speed {self.speed} outside [0, 1]")
        if abs(round(self.steering_angle_deg * 100)) > 0x7FFF:
            raise DriverError(f"steering angle {self.steering_angle_deg} not representable")

    def to_record(self, timestamp_ns: int) -> dict:
        return {
            "steering_angle_centideg": round(self.steering_angle_deg * 100),
            "speed_permille": round(self.speed * SPEED_PERMILLE_MAX),
            "direction": self.direction.value,
            "timestamp_ns": timestamp_ns,
        }

    @classmethod
    def from_record(cls, record: dict) -> "AckermannDriveCommand":
        return cls(
            steering_angle_deg=record["steering_angle_centideg"] / 100,
            speed=record["speed_permille"] / SPEED_PERMILLE_MAX,
            direction=Direction(record["direction"]),
        )

    @classmethod
    def create(
        cls, steering_angle_deg: float, speed: float, direction: "Direction | str | int" = Direction.FORWARD
    ) -> "AckermannDriveCommand":
        """Build a command from loosely typed inputs (direction by name or code)."""
        try:
            if isinstance(direction, str):
                direction = Direction[direction.upper()]
            elif not isinstance(direction, Direction):
                direction = Direction(direction)
        except (KeyError, ValueError):
            raise DriverError(f"unknown direction {direction!r}") from None
        return cls(steering_angle_deg, speed, direction)


@dataclass(frozen=True)
class DriveStatus:
    """Consolidated actuator state as read back from the hardware registers."""

    motor_left_pulse: int
    motor_right_pulse: int
    motor_left_dir: int
    motor_right_dir: int
    steering_pulse: int
    timestamp_ns: int

    def to_record(self) -> dict:
        return {
            "motor_left_pulse": self.motor_left_pulse,
            "motor_right_pulse": self.motor_right_pulse,
            "motor_left_dir": self.motor_left_dir,
            "motor_right_dir": self.motor_right_dir,
            "steering_pulse": self.steering_pulse,
            "timestamp_ns": self.timestamp_ns,
        }

    @classmethod
    def from_record(cls, record: dict) -> "DriveStatus":
        return cls(**record)


def set_motor(gpio: GpioPinBank, i2c: I2cRegisterFile, regmap: RegisterMap, setting: MotorSetting) -> None:
    """Arm the direction pin, then write the duty register."""
    gpio.write(regmap.dir_pin(setting.side), direction_level(setting.side, setting.direction))
    i2c.write_word(regmap.pwm_chip, regmap.duty_reg(setting.side), setting.duty)


class AckermannSteeringSkill:
    """Turns drive commands into register writes and DriveStatus events.

    Commands arrive on the command topic and are applied strictly in order;
    ``step`` is the periodic pump for bus-driven operation,
    ``apply_drive_command`` the direct entry point.
    """

    def __init__(
        self,
        gpio: GpioPinBank,
        i2c: I2cRegisterFile,
        regmap: RegisterMap,
        bus: Bus | None = None,
        clock: VirtualClock | None = None,
        clamp_deg: float = DEFAULT_CLAMP_DEG,
    ) -> None:
        self._gpio = gpio
        self._i2c = i2c
        self._regmap = regmap
        self._bus = bus
        self._clock = clock
        self.clamp_deg = clamp_deg
        self.applied_count = 0
        self._sub: Subscription | None = None
        if bus is not None:
            self._sub = bus.subscribe(DRIVE_COMMAND_TOPIC)

    def _now(self) -> int:
        if self._clock is not None:
            return self._clock.now_ns
        if self._bus is not None:
            return self._bus.clock.now_ns
        return 0

    def clamp_angle(self, angle_deg: float) -> float:
        return max(-self.clamp_deg, min(self.clamp_deg, angle_deg))

    def apply_drive_command(self, cmd: AckermannDriveCommand) -> DriveStatus:
        angle = self.clamp_angle(cmd.steering_angle_deg)
        duty = round(cmd.speed * PWM_DUTY_MAX)
        set_motor(self._gpio, self._i2c, self._regmap, MotorSetting(Side.LEFT, cmd.direction, duty))
        set_motor(self._gpio, self._i2c, self._regmap, MotorSetting(Side.RIGHT, cmd.direction, duty))
        self._i2c.write_word(self._regmap.pwm_chip, self._regmap.steering_reg, angle_to_pulse(angle))

        rm = self._regmap
        status = DriveStatus(
            motor_left_pulse=self._i2c.read_word(rm.pwm_chip, rm.left_duty_reg),
            motor_right_pulse=self._i2c.read_word(rm.pwm_chip, rm.right_duty_reg),
            motor_left_dir=self._gpio.read(rm.left_dir_pin),
            motor_right_dir=self._gpio.read(rm.right_dir_pin),
            steering_pulse=self._i2c.read_word(rm.pwm_chip, rm.steering_reg),
            timestamp_ns=self._now(),
        )
        self.applied_count += 1
        if self._bus is not None:
            self._bus.publish(DRIVE_STATUS_TOPIC, status.to_record())
        return status

    def step(self) -> None:
        if self._sub is None:
            return
        for envelope in self._sub.drain():
            self.apply_drive_command(AckermannDriveCommand.from_record(envelope.decode()))
