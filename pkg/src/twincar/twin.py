"""Composition layer: wires the modules into each rung of the twin ladder.

Every composition runs on one virtual-time scheduler. Within a tick, tasks
fire in a fixed order chosen so that a command injected at the top of the
tick traverses the entire loop before the simulators step:

    inject(0) → command relays(10,11) → skill(20) → emulators(30..32)
    → data relays(40,41) → monitor(50) → simulators(60,61) → recorder(70)

That single ordering is what makes whole-stack runs reproducible: two runs
with equal config, seed, and command trace execute the exact same task
sequence.

Kinds differ only by which nodes exist, never by reimplementing logic:

  physical-twin-sim      vehicle bus + HAL + skill + emulators + simulator
  digital-model          twin bus + drive monitor + simulator (no thread)
  digital-shadow         vehicle stack + Data relays + monitor + twin sim
  digital-twin           shadow + Command relays + drive executor
  digital-twin-prototype twin wiring with the emulated HAL standing in for
                         hardware end to end (the CI stand-in)
"""

import dataclasses
import threading
from enum import Enum

from .clock import RealTimePump, Scheduler, VirtualClock
from .config import StackConfig
from .drivers import (
    AckermannDriveCommand,
    AckermannSteeringSkill,
    Side,
    pulse_to_angle,
)
from .emulators import MotorEmulator, ServoEmulator, wheel_velocity
from .errors import CompositionError, ConfigError, DriverError, SchemaError
from .hal import GpioPinBank, I2cRegisterFile, hal_trace_log
from .messaging.bus import Bus, BusRegistry, TopicKind
from .messaging.trace import Recorder, TraceLog
from .protocol import (
    DRIVE_COMMAND_SCHEMA,
    DRIVE_COMMAND_TOPIC,
    DRIVE_STATUS_SCHEMA,
    DRIVE_STATUS_TOPIC,
    FAULT_SCHEMA,
    FAULT_TOPIC,
    JOINT_COMMAND_SCHEMA,
    POSE_SCHEMA,
    POSE_TOPIC,
    FaultCode,
    FaultSource,
    Joint,
)
from .simulator import (
    STEER_LIMIT_DEG,
    SimConfig,
    VehicleGeometry,
    World,
    ackermann_wheel_angles,
)
from .thread import (
    ControlCollector,
    ControlDistributor,
    DataCollector,
    DataDistributor,
    build_topic_map,
)
from .wire import Bridge, LoopbackBridge, TcpBridge, TcpListener

# Intra-tick task ordering (lower runs first at equal due time).
ORDER_INJECT = 0
ORDER_REPLAY = 5
ORDER_CONTROL_COLLECT = 10
ORDER_CONTROL_DISTRIBUTE = 11
ORDER_SKILL = 20
ORDER_SERVO_EMULATOR = 30
ORDER_MOTOR_EMULATOR_LEFT = 31
ORDER_MOTOR_EMULATOR_RIGHT = 32
ORDER_DATA_COLLECT = 40
ORDER_DATA_DISTRIBUTE = 41
ORDER_MONITOR = 50
ORDER_SIM_PT = 60
ORDER_SIM_DT = 61
ORDER_RECORDER = 70

# Topics allowed across the bridge; everything else is bus-local.
RELAY_TOPIC_NAMES = (DRIVE_STATUS_TOPIC, DRIVE_COMMAND_TOPIC)


class CompositionKind(Enum):
    PHYSICAL_TWIN_SIM = "physical-twin-sim"
    DIGITAL_MODEL = "digital-model"
    DIGITAL_SHADOW = "digital-shadow"
    DIGITAL_TWIN = "digital-twin"
    DIGITAL_TWIN_PROTOTYPE = "digital-twin-prototype"

    @classmethod
    def parse(cls, value: "str | CompositionKind") -> "CompositionKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(
                f"unknown composition kind {value!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None


def _register_standard_topics(bus: Bus) -> None:
    bus.register_topic(DRIVE_COMMAND_TOPIC, TopicKind.COMMAND, DRIVE_COMMAND_SCHEMA)
    bus.register_topic(DRIVE_STATUS_TOPIC, TopicKind.DATA, DRIVE_STATUS_SCHEMA)
    bus.register_topic(FAULT_TOPIC, TopicKind.DATA, FAULT_SCHEMA)
    bus.register_topic(POSE_TOPIC, TopicKind.DATA, POSE_SCHEMA)
    for joint in Joint:
        bus.register_topic(joint.topic, TopicKind.COMMAND, JOINT_COMMAND_SCHEMA)


class DriveMonitor:
    """Translates echoed DriveStatus pulses back into model joint commands.

    This is the twin-side half of the decode pipeline: exactly the
    emulator decode tables applied to the status message instead of the
    registers, so the twin model mirrors whatever the vehicle actually did
    (including clamping) rather than what was asked of it.
    """

    def __init__(self, dt_bus: Bus, geometry: VehicleGeometry, wheel_omega_max: float) -> None:
        self._bus = dt_bus
        self._geometry = geometry
        self._omega_max = wheel_omega_max
        self._sub = dt_bus.subscribe(DRIVE_STATUS_TOPIC)
        self.steering_deg = 0.0
        self.wheel_omega = {Side.LEFT: 0.0, Side.RIGHT: 0.0}
        self.duty = {Side.LEFT: 0, Side.RIGHT: 0}
        self.status_count = 0
        self.fault_count = 0
        self.last_payload: bytes | None = None

    @property
    def speed_fraction(self) -> float:
        return self.duty[Side.LEFT] / 4095

    def _fault(self, detail: str) -> None:
        self.fault_count += 1
        self._bus.publish(
            FAULT_TOPIC,
            {
                "source": FaultSource.DRIVE_MONITOR.value,
                "code": FaultCode.MALFORMED_MESSAGE.value,
                "detail": detail,
                "timestamp_ns": self._bus.clock.now_ns,
            },
        )

    def step(self) -> None:
        for envelope in self._sub.drain():
            try:
                record = envelope.decode()
                angle = pulse_to_angle(record["steering_pulse"])
                if not abs(angle) < STEER_LIMIT_DEG:
                    raise DriverError(f"steering angle {angle:.2f} deg outside range")
            except (SchemaError, DriverError) as exc:
                self._fault(str(exc))
                continue  # hold last good state
            self.last_payload = envelope.payload
            self.status_count += 1
            self.steering_deg = angle
            self.duty = {
                Side.LEFT: record["motor_left_pulse"],
                Side.RIGHT: record["motor_right_pulse"],
            }
            self.wheel_omega = {
                side: wheel_velocity(
                    side, record[f"motor_{side.value}_dir"], self.duty[side], self._omega_max
                )
                for side in Side
            }
            now = self._bus.clock.now_ns
            inner_outer = ackermann_wheel_angles(self._geometry, angle)
            right, left = inner_outer if angle >= 0 else reversed(inner_outer)
            for joint, value in (
                (Joint.STEERING_LEFT, left),
                (Joint.STEERING_RIGHT, right),
                (Joint.REAR_LEFT_WHEEL, self.wheel_omega[Side.LEFT]),
                (Joint.REAR_RIGHT_WHEEL, self.wheel_omega[Side.RIGHT]),
            ):
                self._bus.publish(
                    joint.topic, {"joint": joint.value, "value": value, "timestamp_ns": now}
                )

    def attach(self, scheduler: Scheduler, period_s: float, order: int = ORDER_MONITOR) -> None:
        scheduler.add_periodic("drive-monitor", round(period_s * 1e9), self.step, order=order)


class DriveExecutor:
    """Twin-side command entry point; what it sends reaches both twins."""

    def __init__(self, dt_bus: Bus) -> None:
        self._bus = dt_bus
        self.sent_count = 0

    def send(self, command: AckermannDriveCommand) -> int:
        sequence = self._bus.publish(
            DRIVE_COMMAND_TOPIC, command.to_record(self._bus.clock.now_ns)
        )
        self.sent_count += 1
        return sequence


class Composition:
    """A running twin stack; owns its clock, buses, tasks, and transport."""

    def __init__(self, kind: CompositionKind, config: StackConfig) -> None:
        self.kind = kind
        self.config = config
        self.clock = VirtualClock()
        self.scheduler = Scheduler(self.clock)
        self.registry = BusRegistry()
        self._nodes: dict[str, object] = {}
        self._pump: RealTimePump | None = None
        self._listener: TcpListener | None = None

        self.pt_bus: Bus | None = None
        self.dt_bus: Bus | None = None
        self.gpio: GpioPinBank | None = None
        self.i2c: I2cRegisterFile | None = None
        self.skill: AckermannSteeringSkill | None = None
        self.pt_world: World | None = None
        self.dt_world: World | None = None
        self.monitor: DriveMonitor | None = None
        self.executor: DriveExecutor | None = None
        self.pt_bridge: Bridge | None = None
        self.dt_bridge: Bridge | None = None
        self.relays: dict[str, object] = {}

        self._build()

    # -- wiring ---------------------------------------------------------

    def _build(self) -> None:
        kind, cfg = self.kind, self.config
        has_pt = kind is not CompositionKind.DIGITAL_MODEL
        has_dt = kind is not CompositionKind.PHYSICAL_TWIN_SIM
        has_thread = kind in (
            CompositionKind.DIGITAL_SHADOW,
            CompositionKind.DIGITAL_TWIN,
            CompositionKind.DIGITAL_TWIN_PROTOTYPE,
        )
        has_command_relays = kind in (
            CompositionKind.DIGITAL_TWIN,
            CompositionKind.DIGITAL_TWIN_PROTOTYPE,
        )
        omega_max = cfg.sim.wheel_omega_max(cfg.geometry)

        if has_pt:
            self.pt_bus = self.registry.create_bus("pt", clock=self.clock)
            _register_standard_topics(self.pt_bus)
            self._nodes["pt-bus"] = self.pt_bus

            self.gpio = GpioPinBank(clock=self.clock, trace=cfg.trace_hal)
            self.i2c = I2cRegisterFile(
                clock=self.clock, trace=cfg.trace_hal, bounds=cfg.register_map.i2c_bounds()
            )
            self._nodes["hal"] = (self.gpio, self.i2c)

            self.skill = AckermannSteeringSkill(
                self.gpio,
                self.i2c,
                regmap=cfg.register_map,
                bus=self.pt_bus,
                clamp_deg=cfg.clamp_deg,
            )
            self.scheduler.add_periodic(
                "ackermann-skill", round(cfg.poll_period_s * 1e9), self.skill.step, order=ORDER_SKILL
            )
            self._nodes["ackermann-skill"] = self.skill

            servo = ServoEmulator(self.i2c, self.pt_bus, regmap=cfg.register_map, geometry=cfg.geometry)
            servo.attach(self.scheduler, cfg.poll_period_s, order=ORDER_SERVO_EMULATOR)
            self._nodes["servo-emulator"] = servo
            for side, order in ((Side.LEFT, ORDER_MOTOR_EMULATOR_LEFT), (Side.RIGHT, ORDER_MOTOR_EMULATOR_RIGHT)):
                motor = MotorEmulator(
                    side, self.gpio, self.i2c, self.pt_bus, omega_max, regmap=cfg.register_map
                )
                motor.attach(self.scheduler, cfg.poll_period_s, order=order)
                self._nodes[motor.name] = motor

            self.pt_world = World(cfg.geometry, cfg.sim, bus=self.pt_bus, clock=self.clock)
            self.pt_world.attach(self.scheduler, order=ORDER_SIM_PT, name="pt-simulator")
            self._nodes["pt-simulator"] = self.pt_world

        if has_dt:
            self.dt_bus = self.registry.create_bus("dt", clock=self.clock)
            _register_standard_topics(self.dt_bus)
            self._nodes["dt-bus"] = self.dt_bus

            self.monitor = DriveMonitor(self.dt_bus, cfg.geometry, omega_max)
            self.monitor.attach(self.scheduler, cfg.poll_period_s)
            self._nodes["drive-monitor"] = self.monitor

            # The twin-side model is the ideal kinematic model: never noisy.
            dt_sim = dataclasses.replace(cfg.sim, noise_stddev_m=None)
            self.dt_world = World(cfg.geometry, dt_sim, bus=self.dt_bus, clock=self.clock)
            self.dt_world.attach(self.scheduler, order=ORDER_SIM_DT, name="dt-simulator")
            self._nodes["dt-simulator"] = self.dt_world

        if has_thread:
            assert self.pt_bus is not None and self.dt_bus is not None
            self.pt_bridge, self.dt_bridge = self._connect_bridge()
            self._nodes["bridge"] = (self.pt_bridge, self.dt_bridge)

            collector = DataCollector(self.pt_bus, self.pt_bridge)
            collector.attach(self.scheduler, cfg.poll_period_s, order=ORDER_DATA_COLLECT)
            distributor = DataDistributor(self.dt_bus, self.dt_bridge)
            distributor.attach(self.scheduler, cfg.poll_period_s, order=ORDER_DATA_DISTRIBUTE)
            self.relays = {collector.name: collector, distributor.name: distributor}

            if has_command_relays:
                control_collector = ControlCollector(self.dt_bus, self.dt_bridge)
                control_collector.attach(self.scheduler, cfg.poll_period_s, order=ORDER_CONTROL_COLLECT)
                control_distributor = ControlDistributor(self.pt_bus, self.pt_bridge)
                control_distributor.attach(self.scheduler, cfg.poll_period_s, order=ORDER_CONTROL_DISTRIBUTE)
                self.relays[control_collector.name] = control_collector
                self.relays[control_distributor.name] = control_distributor

            self._nodes.update(self.relays)

        if has_command_relays:
            assert self.dt_bus is not None
            self.executor = DriveExecutor(self.dt_bus)
            self._nodes["drive-executor"] = self.executor

    def _connect_bridge(self) -> tuple[Bridge, Bridge]:
        assert self.pt_bus is not None
        topic_map = build_topic_map(self.pt_bus, list(RELAY_TOPIC_NAMES))
        if self.config.transport == "loopback":
            return LoopbackBridge.pair(topic_map)
        try:
            self._listener = TcpListener(self.config.host, self.config.port, topic_map)
            host, port = self._listener.address
            accepted: dict[str, TcpBridge] = {}

            def _accept() -> None:
                accepted["bridge"] = self._listener.accept()

            acceptor = threading.Thread(target=_accept, daemon=True)
            acceptor.start()
            dt_side = TcpBridge.connect(host, port, topic_map)
            acceptor.join(timeout=5.0)
            if "bridge" not in accepted:
                raise CompositionError("bridge accept did not complete")
            return accepted["bridge"], dt_side
        except OSError as exc:
            raise CompositionError(f"cannot open bridge endpoint: {exc}") from exc

    # -- runtime --------------------------------------------------------

    @property
    def tick_s(self) -> float:
        return self.config.sim.timestep_s

    def node_names(self) -> frozenset[str]:
        return frozenset(self._nodes)

    def node(self, name: str) -> object:
        return self._nodes[name]

    def advance(self, seconds: float) -> None:
        """Run the composition forward in virtual time."""
        self.scheduler.run_for(round(seconds * 1e9))

    def advance_ticks(self, ticks: int) -> None:
        self.advance(ticks * self.tick_s)

    def start_realtime(self) -> None:
        if self._pump is None:
            self._pump = RealTimePump(self.scheduler)
        self._pump.start()

    def stop_realtime(self) -> None:
        if self._pump is not None:
            self._pump.stop()

    @property
    def realtime(self) -> bool:
        return self._pump is not None and self._pump.running

    def send_command(
        self,
        steering_angle_deg: float,
        speed: float,
        direction: "str | int" = "forward",
    ) -> int:
        """Issue a drive command through the composition's natural entry point:
        the twin-side executor when one exists, the vehicle bus otherwise."""
        command = AckermannDriveCommand.create(steering_angle_deg, speed, direction)
        if self.executor is not None:
            return self.executor.send(command)
        if self.pt_bus is not None:
            return self.pt_bus.publish(
                DRIVE_COMMAND_TOPIC, command.to_record(self.pt_bus.clock.now_ns)
            )
        raise CompositionError(f"{self.kind.value} accepts no drive commands")

    def pose(self, side: str = "pt") -> tuple[float, float, float]:
        """Current (x, y, heading) of the requested world."""
        world = {"pt": self.pt_world, "dt": self.dt_world}.get(side)
        if world is None:
            raise CompositionError(f"composition {self.kind.value} has no {side!r} world")
        pose = world.pose
        return (pose.x_m, pose.y_m, pose.heading_rad)

    def vehicle_world(self) -> World:
        """The world that plays the physical vehicle (twin-side for a pure model)."""
        world = self.pt_world if self.pt_world is not None else self.dt_world
        assert world is not None
        return world

    def reset_worlds(self, seed: int | None = None) -> None:
        if self.pt_world is not None:
            self.pt_world.reset(seed)
        if self.dt_world is not None:
            self.dt_world.reset()

    def hal_trace(self) -> TraceLog:
        if self.gpio is None or self.i2c is None:
            raise CompositionError(f"{self.kind.value} has no HAL")
        return hal_trace_log(self.gpio, self.i2c)

    def hal_write_count(self) -> int:
        if self.gpio is None or self.i2c is None:
            return 0
        return self.gpio.write_count + self.i2c.write_count

    def attach_recorder(self, topic_names: list[str], side: str = "pt") -> Recorder:
        bus = {"pt": self.pt_bus, "dt": self.dt_bus}.get(side)
        if bus is None:
            raise CompositionError(f"composition {self.kind.value} has no {side!r} bus")
        recorder = Recorder(bus, topic_names, metadata={"kind": self.kind.value, "side": side})
        recorder.attach(self.scheduler, round(self.config.poll_period_s * 1e9), order=ORDER_RECORDER)
        return recorder

    def stats(self) -> dict[str, object]:
        out: dict[str, object] = {
            "kind": self.kind.value,
            "virtual_time_ns": self.clock.now_ns,
            "realtime": self.realtime,
            "nodes": sorted(self._nodes),
            "hal_write_count": self.hal_write_count(),
        }
        if self.skill is not None:
            out["commands_applied"] = self.skill.applied_count
        if self.monitor is not None:
            out["monitor_status_count"] = self.monitor.status_count
        if self.executor is not None:
            out["commands_sent"] = self.executor.sent_count
        if self.relays:
            out["relays"] = {
                name: {
                    "forwarded": getattr(node, "forwarded_frames", None),
                    "delivered": getattr(node, "delivered_frames", None),
                    "buffered": getattr(node, "buffered_frames", None),
                    "dropped": getattr(node, "dropped_frames", None),
                    "discarded": getattr(node, "discarded_frames", None),
                }
                for name, node in self.relays.items()
            }
        return out

    def shutdown(self) -> None:
        self.stop_realtime()
        self.scheduler.cancel_all()
        for bridge in (self.pt_bridge, self.dt_bridge):
            if bridge is not None:
                bridge.close()
        if self._listener is not None:
            self._listener.close()
        self.registry.close_all()

    def __enter__(self) -> "Composition":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.shutdown()

    @property
    def is_prototype(self) -> bool:
        return self.kind is CompositionKind.DIGITAL_TWIN_PROTOTYPE


def assemble(
    kind: "str | CompositionKind | None" = None,
    config: StackConfig | None = None,
) -> Composition:
    """Build and wire a composition; the handle owns everything it created."""
    config = config or StackConfig()
    resolved = CompositionKind.parse(kind if kind is not None else config.kind)
    return Composition(resolved, config)
