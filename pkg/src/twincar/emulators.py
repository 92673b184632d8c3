"""Servo and DC-motor emulators.

Each emulator polls the HAL exactly where the hardware would sit, inverts
the register encoding back into a physical quantity, and publishes joint
commands for the simulated vehicle. Access is strictly read-only: the
emulators are the sensor/actuator boundary, and nothing downstream of them
can reach back into the registers.

Both motors run the same decode; the electrical inversion of the right
motor lives in the shared direction table (``drivers.GPIO_FORWARD_LEVEL``),
so driver and emulator always agree on what a pin level means.
"""

from dataclasses import dataclass

from .clock import Scheduler
from .drivers import (
    GPIO_FORWARD_LEVEL,
    PWM_DUTY_MAX,
    RegisterMap,
    Side,
    pulse_to_angle,
)
from .errors import DriverError
from .hal import GpioPinBank, I2cRegisterFile
from .messaging.bus import Bus
from .protocol import FAULT_TOPIC, FaultCode, FaultSource, Joint
from .simulator import STEER_LIMIT_DEG, VehicleGeometry, ackermann_wheel_angles

DEFAULT_POLL_PERIOD_S = 0.010

_WHEEL_JOINT = {Side.LEFT: Joint.REAR_LEFT_WHEEL, Side.RIGHT: Joint.REAR_RIGHT_WHEEL}


def wheel_velocity(side: Side, pin_level: int, duty: int, wheel_omega_max: float) -> float:
    """Decode one motor's registers into a signed wheel angular velocity (rad/s)."""
    sign = 1.0 if pin_level == GPIO_FORWARD_LEVEL[side] else -1.0
    return sign * (duty / PWM_DUTY_MAX) * wheel_omega_max


@dataclass(frozen=True)
class FaultEvent:
    source: FaultSource
    code: FaultCode
    detail: str


class _EmulatorBase:
    def __init__(self, bus: Bus, name: str) -> None:
        self._bus = bus
        self.name = name
        self.publish_count = 0
        self.fault_count = 0

    def _publish_joint(self, joint: Joint, value: float) -> None:
        self._bus.publish(
            joint.topic,
            {"joint": joint.value, "value": value, "timestamp_ns": self._bus.clock.now_ns},
        )
        self.publish_count += 1

    def _publish_fault(self, source: FaultSource, code: FaultCode, detail: str) -> None:
        self._bus.publish(
            FAULT_TOPIC,
            {
                "source": source.value,
                "code": code.value,
                "detail": detail,
                "timestamp_ns": self._bus.clock.now_ns,
            },
        )
        self.fault_count += 1

    def attach(self, scheduler: Scheduler, period_s: float = DEFAULT_POLL_PERIOD_S, order: int = 30) -> None:
        scheduler.add_periodic(self.name, round(period_s * 1e9), self.poll, order=order)

    def poll(self) -> None:  # pragma: no cover - overridden
        raise NotImplementedError


class ServoEmulator(_EmulatorBase):
    """Polls the steering-pulse register and publishes both front joint angles."""

    def __init__(
        self,
        i2c: I2cRegisterFile,
        bus: Bus,
        regmap: RegisterMap | None = None,
        geometry: VehicleGeometry | None = None,
    ) -> None:
        super().__init__(bus, "servo-emulator")
        self._i2c = i2c
        self._regmap = regmap or RegisterMap()
        self._geometry = geometry or VehicleGeometry()
        # Change detection baseline: whatever the register holds right now
        # (0 before any driver write) counts as already seen, so startup
        # never publishes or faults.
        self._last_pulse = self._read_pulse()
        self.angle_deg = 0.0  # last good decoded center angle

    def _read_pulse(self) -> int:
        return self._i2c.read_word(self._regmap.pwm_chip, self._regmap.steering_reg)

    def poll(self) -> None:
        pulse = self._read_pulse()
        if pulse == self._last_pulse:
            return
        self._last_pulse = pulse
        try:
            angle = pulse_to_angle(pulse)
            if not abs(angle) < STEER_LIMIT_DEG:
                raise DriverError(f"decoded angle {angle:.2f} deg outside steerable range")
        except DriverError as exc:
            self._publish_fault(FaultSource.SERVO_EMULATOR, FaultCode.BAD_PULSE, str(exc))
            return
        self.angle_deg = angle
        inner_outer = ackermann_wheel_angles(self._geometry, angle)
        # Positive angle = right turn = right wheel inner.
        right, left = inner_outer if angle >= 0 else reversed(inner_outer)
        self._publish_joint(Joint.STEERING_LEFT, left)
        self._publish_joint(Joint.STEERING_RIGHT, right)


class MotorEmulator(_EmulatorBase):
    """Polls one motor's direction pin and duty register; publishes wheel velocity."""

    def __init__(
        self,
        side: Side,
        gpio: GpioPinBank,
        i2c: I2cRegisterFile,
        bus: Bus,
        wheel_omega_max: float,
        regmap: RegisterMap | None = None,
    ) -> None:
        super().__init__(bus, f"motor-emulator-{side.name.lower()}")
        self.side = side
        self._gpio = gpio
        self._i2c = i2c
        self._regmap = regmap or RegisterMap()
        self._omega_max = wheel_omega_max
        self._last = self._read_registers()
        self.velocity = 0.0

    def _read_registers(self) -> tuple[int, int]:
        return (
            self._gpio.read(self._regmap.dir_pin(self.side)),
            self._i2c.read_word(self._regmap.pwm_chip, self._regmap.duty_reg(self.side)),
        )

    def poll(self) -> None:
        state = self._read_registers()
        if state == self._last:
            return
        self._last = state
        pin_level, duty = state
        self.velocity = wheel_velocity(self.side, pin_level, duty, self._omega_max)
        self._publish_joint(_WHEEL_JOINT[self.side], self.velocity)
