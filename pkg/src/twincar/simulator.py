"""Deterministic planar Ackermann-kinematics world.

Fixed-step explicit Euler on a bicycle model: per step the vehicle moves
along its current heading, then turns. The calibrated velocity factor scales
commanded wheel speed into ground speed exactly once, here, which keeps
travelled distance linear in the factor (the property the calibration search
relies on). Optional per-step Gaussian position noise models real-world
spread; it is only drawn while the vehicle moves, so a resting pose is a
fixed point regardless of seed.
"""

import math
import random
from dataclasses import dataclass, replace
from enum import Enum

from .clock import Scheduler, VirtualClock
from .errors import SimulationError
from .messaging.bus import Bus, Subscription
from .protocol import JOINT_TOPICS, POSE_TOPIC, Joint

# Nominal full-duty ground speed: one meter in 1.45 seconds.
DEFAULT_V_MAX_MPS = 1.0 / 1.45
DEFAULT_TIMESTEP_S = 0.01

# Default noise sized so a full 1.45 s run accumulates ~0.01 m stddev.
DEFAULT_RUN_NOISE_M = 0.01


def per_step_noise(total_stddev_m: float = DEFAULT_RUN_NOISE_M, steps: int = 145) -> float:
    """Per-step stddev that accumulates to ``total_stddev_m`` over ``steps`` steps."""
    return total_stddev_m / math.sqrt(steps)


@dataclass(frozen=True)
class VehicleGeometry:
    wheelbase_m: float = 0.095
    track_m: float = 0.085
    wheel_radius_m: float = 0.0325

    def __post_init__(self) -> None:
        if self.wheelbase_m <= 0 or self.track_m <= 0 or self.wheel_radius_m <= 0:
            raise SimulationError("geometry dimensions must be strictly positive")
        if self.track_m >= 2 * self.wheelbase_m:
            raise SimulationError("track must be smaller than twice the wheelbase")


@dataclass(frozen=True)
class SimConfig:
    timestep_s: float = DEFAULT_TIMESTEP_S
    velocity_factor: float = 1.0
    v_max_mps: float = DEFAULT_V_MAX_MPS
    seed: int = 0
    noise_stddev_m: float | None = None  # per-step position noise, None = off

    def __post_init__(self) -> None:
        if self.timestep_s <= 0:
            raise SimulationError("timestep must be positive")
        if self.velocity_factor <= 0:
            raise SimulationError("velocity factor must be positive")
        if self.v_max_mps <= 0:
            raise SimulationError("v_max must be positive")
        if self.noise_stddev_m is not None and self.noise_stddev_m < 0:
            raise SimulationError("noise stddev cannot be negative")

    def wheel_omega_max(self, geometry: VehicleGeometry) -> float:
        """Full-duty wheel angular velocity (rad/s) before the velocity factor."""
        return self.v_max_mps / geometry.wheel_radius_m


@dataclass(frozen=True)
class Pose2D:
    x_m: float = 0.0
    y_m: float = 0.0
    heading_rad: float = 0.0


class Wheel(Enum):
    REAR_RIGHT = "rear_right"
    REAR_LEFT = "rear_left"
    FRONT_RIGHT = "front_right"
    FRONT_LEFT = "front_left"


def _normalize_heading(theta: float) -> float:
    theta = math.fmod(theta + math.pi, 2 * math.pi)
    if theta <= 0:
        theta += 2 * math.pi
    return theta - math.pi


STEER_LIMIT_DEG = 40.0


def ackermann_wheel_angles(geometry: VehicleGeometry, steering_deg: float) -> tuple[float, float]:
    """Per-wheel front angles (inner_deg, outer_deg) for a center steering angle.

    The inner wheel (closer to the turn center) turns sharper than the
    commanded angle, the outer one shallower; both carry the sign of the
    input. Straight ahead maps to (0, 0).
    """
    if not abs(steering_deg) < STEER_LIMIT_DEG:
        raise SimulationError(f"|steering| must be < {STEER_LIMIT_DEG} deg, got {steering_deg}")
    tan_delta = math.tan(math.radians(abs(steering_deg)))
    if tan_delta == 0.0:  # exact zero, or tan underflow on subnormal angles
        return (0.0, 0.0)
    radius = geometry.wheelbase_m / tan_delta
    inner = math.degrees(math.atan(geometry.wheelbase_m / (radius - geometry.track_m / 2)))
    outer = math.degrees(math.atan(geometry.wheelbase_m / (radius + geometry.track_m / 2)))
    sign = 1.0 if steering_deg > 0 else -1.0
    return (sign * inner, sign * outer)


def center_angle_from_joints(geometry: VehicleGeometry, left_deg: float, right_deg: float) -> float:
    """Reconstruct the center steering angle from the two front-wheel joints.

    Inverse of ``ackermann_wheel_angles``: each joint implies a turn radius;
    the implied center angles are averaged, so reconstruct∘expand is the
    identity up to float error.
    """
    if left_deg == 0 and right_deg == 0:
        return 0.0
    sign = 1.0 if (left_deg + right_deg) > 0 else -1.0
    # Positive steering = right turn = right wheel is inner.
    inner, outer = (right_deg, left_deg) if sign > 0 else (left_deg, right_deg)
    half_track = geometry.track_m / 2
    implied = []
    tan_inner = math.tan(math.radians(abs(inner)))
    if tan_inner != 0.0:
        r = geometry.wheelbase_m / tan_inner + half_track
        implied.append(math.degrees(math.atan(geometry.wheelbase_m / r)))
    tan_outer = math.tan(math.radians(abs(outer)))
    if tan_outer != 0.0:
        r = geometry.wheelbase_m / tan_outer - half_track
        if r > 0:
            implied.append(math.degrees(math.atan(geometry.wheelbase_m / r)))
    if not implied:
        return 0.0
    return sign * sum(implied) / len(implied)


class World:
    """Integrates joint commands into a vehicle pose.

    The body frame sits on the rear-right wheel contact point (the pose the
    experiment tracks); the rear-left wheel is one track width to its left,
    the front axle one wheelbase ahead.
    """

    def __init__(
        self,
        geometry: VehicleGeometry | None = None,
        config: SimConfig | None = None,
        bus: Bus | None = None,
        clock: VirtualClock | None = None,
    ) -> None:
        self.geometry = geometry or VehicleGeometry()
        self.config = config or SimConfig()
        self._bus = bus
        self._clock = clock
        self._pose = Pose2D()
        self._joints: dict[Joint, float] = {j: 0.0 for j in Joint}
        self._rng = random.Random(self.config.seed)
        self.step_count = 0
        self._subs: list[Subscription] = []
        if bus is not None:
            self._subs = [bus.subscribe(name) for name in JOINT_TOPICS]

    @property
    def pose(self) -> Pose2D:
        return self._pose

    @property
    def joints(self) -> dict[Joint, float]:
        return dict(self._joints)

    def set_joint(self, joint: Joint, value: float) -> None:
        self._joints[joint] = value

    def reset(self, seed: int | None = None) -> None:
        self._pose = Pose2D()
        self._joints = {j: 0.0 for j in Joint}
        if seed is not None:
            self.config = replace(self.config, seed=seed)
        self._rng = random.Random(self.config.seed)
        self.step_count = 0

    def set_noise(self, per_step_stddev_m: float | None) -> None:
        self.config = replace(self.config, noise_stddev_m=per_step_stddev_m)

    def _drain_joint_commands(self) -> None:
        for sub in self._subs:
            for envelope in sub.drain():
                record = envelope.decode()
                self._joints[Joint(record["joint"])] = record["value"]

    def step(self) -> Pose2D:
        """Advance one fixed timestep using the latest joint values."""
        self._drain_joint_commands()
        cfg, geom = self.config, self.geometry
        dt = cfg.timestep_s

        omega_avg = (self._joints[Joint.REAR_LEFT_WHEEL] + self._joints[Joint.REAR_RIGHT_WHEEL]) / 2
        v = cfg.velocity_factor * geom.wheel_radius_m * omega_avg
        delta_deg = center_angle_from_joints(
            geom, self._joints[Joint.STEERING_LEFT], self._joints[Joint.STEERING_RIGHT]
        )

        heading = self._pose.heading_rad
        new_heading = heading + (v / geom.wheelbase_m) * math.tan(math.radians(delta_deg)) * dt
        x = self._pose.x_m + v * math.cos(heading) * dt
        y = self._pose.y_m + v * math.sin(heading) * dt

        if cfg.noise_stddev_m and v != 0.0:
            x += self._rng.gauss(0.0, cfg.noise_stddev_m)
            y += self._rng.gauss(0.0, cfg.noise_stddev_m)

        self._pose = Pose2D(x, y, _normalize_heading(new_heading))
        self.step_count += 1
        self._publish_pose()
        return self._pose

    def _publish_pose(self) -> None:
        if self._bus is None:
            return
        x, y, z = self.wheel_position(Wheel.REAR_RIGHT)
        self._bus.publish(
            POSE_TOPIC,
            {"x": x, "y": y, "z": z, "timestamp_ns": self._bus.clock.now_ns},
        )

    def wheel_position(self, wheel: Wheel) -> tuple[float, float, float]:
        """World position of a wheel contact point; z is always 0."""
        offsets = {
            Wheel.REAR_RIGHT: (0.0, 0.0),
            Wheel.REAR_LEFT: (0.0, self.geometry.track_m),
            Wheel.FRONT_RIGHT: (self.geometry.wheelbase_m, 0.0),
            Wheel.FRONT_LEFT: (self.geometry.wheelbase_m, self.geometry.track_m),
        }
        ox, oy = offsets[wheel]
        c, s = math.cos(self._pose.heading_rad), math.sin(self._pose.heading_rad)
        return (self._pose.x_m + c * ox - s * oy, self._pose.y_m + s * ox + c * oy, 0.0)

    def attach(self, scheduler: Scheduler, order: int = 60, name: str = "simulator") -> None:
        scheduler.add_periodic(name, round(self.config.timestep_s * 1e9), lambda: self.step(), order=order)
