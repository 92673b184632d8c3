"""In-process integration suite for CI: six ordered stages, JSON-line report.

Stages (each builds and tears down its own composition, loopback transport):

  1. unit-invariants        driver/emulator decode tables, clamp constant
  2. codec-vectors          frozen byte vectors + round-trips per schema
  3. thread-fidelity        payload bytes cross the bridge bit-exactly
  4. shadow-unidirectional  twin-side commands never reach vehicle registers
  5. twin-mirroring         vehicle registers and twin model agree post-command
  6. one-meter              calibrate, then noisy/noise-free distance envelopes

Two deliberate fault injections exercise the failure paths: ``clamp``
builds the stack with a 25° clamp (stages 1 and 5 must then fail) and
``bridge-cut`` severs the link mid-transfer (stage 3 must then fail).
"""

import dataclasses
import time
from dataclasses import dataclass

from .config import StackConfig
from .drivers import (
    DEFAULT_CLAMP_DEG,
    AckermannDriveCommand,
    RegisterMap,
    Side,
    angle_to_pulse,
    pulse_to_angle,
)
from .emulators import wheel_velocity
from .errors import TwinError
from .protocol import DRIVE_COMMAND_SCHEMA, DRIVE_STATUS_SCHEMA, DRIVE_STATUS_TOPIC
from .simulator import VehicleGeometry, ackermann_wheel_angles, center_angle_from_joints
from .twin import CompositionKind, assemble
from .experiment import calibrate_velocity_factor, run_one_meter_trial

FAULT_INJECTIONS = ("clamp", "bridge-cut")


class _CheckFailure(AssertionError):
    pass


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise _CheckFailure(message)


@dataclass(frozen=True)
class SuiteCheck:
    name: str
    passed: bool
    detail: str
    duration_s: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SuiteReport:
    checks: tuple[SuiteCheck, ...]
    fault_injection: str | None = None

    @property
    def ok(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_records(self) -> list[dict]:
        header = {
            "suite": "twincar-integration",
            "ok": self.ok,
            "fault_injection": self.fault_injection,
            "checks": len(self.checks),
        }
        return [header] + [check.to_dict() for check in self.checks]


def _check_unit_invariants(config: StackConfig) -> str:
    _require(angle_to_pulse(0.0) == 1500, "0 deg must map to the 1500 us center pulse")
    for angle in (-40.0, -20.0, -10.0, 0.0, 10.0, 20.0, 39.9):
        back = pulse_to_angle(angle_to_pulse(angle))
        _require(abs(back - angle) <= 0.05, f"pulse round-trip drifted at {angle} deg: {back}")
    _require(wheel_velocity(Side.LEFT, 1, 4095, 10.0) == 10.0, "left pin 1 must mean forward")
    _require(wheel_velocity(Side.RIGHT, 1, 4095, 10.0) == -10.0, "right motor must be inverted")
    _require(wheel_velocity(Side.RIGHT, 0, 0, 10.0) == 0.0, "zero duty must mean zero velocity")

    geometry = config.geometry
    inner, outer = ackermann_wheel_angles(geometry, 15.0)
    _require(inner > 15.0 > outer > 0, f"Ackermann ordering violated: {inner}, {outer}")
    recovered = center_angle_from_joints(geometry, *reversed((inner, outer)))
    _require(abs(recovered - 15.0) < 1e-9, f"joint angles must invert to the center angle, got {recovered}")

    _require(
        config.clamp_deg == DEFAULT_CLAMP_DEG,
        f"steering clamp is {config.clamp_deg} deg, expected {DEFAULT_CLAMP_DEG}",
    )
    return "decode tables, Ackermann ordering, and clamp constant verified"


def _check_codec_vectors(config: StackConfig) -> str:
    record = {
        "motor_left_pulse": 4095,
        "motor_right_pulse": 4095,
        "motor_left_dir": 1,
        "motor_right_dir": 0,
        "steering_pulse": 1500,
        "timestamp_ns": 123456789,
    }
    payload = DRIVE_STATUS_SCHEMA.encode(record)
    expected = bytes.fromhex("0fff0fff010005dc00000000075bcd15")
    _require(payload == expected, f"DriveStatus vector mismatch: {payload.hex()}")
    _require(DRIVE_STATUS_SCHEMA.decode(payload) == record, "DriveStatus decode != original record")

    command = AckermannDriveCommand.create(-12.5, 0.5, "backward")
    encoded = command.to_record(7)
    round_tripped = DRIVE_COMMAND_SCHEMA.decode(DRIVE_COMMAND_SCHEMA.encode(encoded))
    _require(round_tripped == encoded, "drive command record did not round-trip")
    _require(
        AckermannDriveCommand.from_record(round_tripped) == command,
        "drive command object did not round-trip",
    )
    return "frozen byte vectors and round-trips hold"


def _check_thread_fidelity(config: StackConfig, cut_bridge: bool) -> str:
    with assemble(CompositionKind.DIGITAL_SHADOW, config) as comp:
        assert comp.pt_bus is not None and comp.dt_bus is not None
        dt_sub = comp.dt_bus.subscribe(DRIVE_STATUS_TOPIC)
        sent = []
        for i in range(5):
            record = {
                "motor_left_pulse": 100 * i,
                "motor_right_pulse": 100 * i,
                "motor_left_dir": 1,
                "motor_right_dir": 0,
                "steering_pulse": 1500 + i,
                "timestamp_ns": i,
            }
            comp.pt_bus.publish(DRIVE_STATUS_TOPIC, record)
            sent.append(DRIVE_STATUS_SCHEMA.encode(record))
        if cut_bridge:
            bridge = comp.pt_bridge
            cut = getattr(bridge, "cut", None)
            if cut is not None:
                cut()
            else:  # TCP transport: a closed socket is the same fault
                bridge.close()
        comp.advance(0.1)
        received = [env.payload for env in dt_sub.drain()]
        _require(
            received == sent,
            f"transport delivered {len(received)}/{len(sent)} frames "
            f"(bridge connected: {comp.pt_bridge.connected})",
        )
    return "5 frames crossed the bridge byte-identically, in order"


def _check_shadow_unidirectional(config: StackConfig) -> str:
    with assemble(CompositionKind.DIGITAL_SHADOW, config) as comp:
        assert comp.dt_bus is not None
        comp.advance(0.1)
        writes_before = comp.hal_write_count()
        for i in range(100):
            comp.dt_bus.publish(
                "picarx/drive/command",
                AckermannDriveCommand.create(5.0, 0.5).to_record(i),
            )
        comp.advance(0.5)
        writes_after = comp.hal_write_count()
        _require(
            writes_after == writes_before,
            f"twin-side commands caused {writes_after - writes_before} vehicle register writes",
        )
    return "100 twin-side commands, zero vehicle register writes"


def _check_twin_mirroring(config: StackConfig) -> str:
    with assemble(CompositionKind.DIGITAL_TWIN, config) as comp:
        assert comp.i2c is not None and comp.monitor is not None
        regmap: RegisterMap = config.register_map
        comp.send_command(30.0, 0.5)
        comp.advance_ticks(3)
        pulse = comp.i2c.read_word(regmap.pwm_chip, regmap.steering_reg)
        _require(
            pulse == angle_to_pulse(DEFAULT_CLAMP_DEG),
            f"vehicle steering register holds {pulse} us, expected the {DEFAULT_CLAMP_DEG} deg clamp",
        )
        _require(
            abs(comp.monitor.steering_deg - DEFAULT_CLAMP_DEG) <= 0.05,
            f"twin model steering {comp.monitor.steering_deg} deg, expected {DEFAULT_CLAMP_DEG}",
        )
        _require(
            abs(comp.monitor.speed_fraction - 0.5) <= 1 / 4095,
            f"twin model speed {comp.monitor.speed_fraction}, expected 0.5",
        )
        comp.send_command(-10.0, 0.0)
        comp.advance_ticks(3)
        _require(
            abs(comp.monitor.steering_deg - (-10.0)) <= 0.05,
            f"twin model steering {comp.monitor.steering_deg} deg, expected -10",
        )
        _require(comp.monitor.speed_fraction == 0.0, "twin model must be at rest after a stop")
    return "vehicle registers and twin model agree, clamp included"


def _check_one_meter(config: StackConfig) -> str:
    with assemble(CompositionKind.DIGITAL_TWIN, config) as comp:
        result = calibrate_velocity_factor(comp)
        _require(
            result.residual_m <= 1e-3,
            f"calibration residual {result.residual_m:.2e} m above tolerance",
        )
        for trial in result.trials:
            _require(
                0.95 <= trial.distance_m <= 1.05,
                f"noisy trial {trial.index} traveled {trial.distance_m:.4f} m",
            )
        exact = run_one_meter_trial(comp, repetitions=3, noise=False)
        for trial in exact:
            _require(
                abs(trial.distance_m - 1.0) <= 1e-3,
                f"noise-free trial {trial.index} traveled {trial.distance_m:.6f} m",
            )
    return (
        f"velocity factor {result.velocity_factor:.6f}, residual {result.residual_m:.2e} m, "
        f"10 noisy + 3 exact trials in envelope"
    )


def run_integration_suite(
    config: StackConfig | None = None, inject_fault: str | None = None
) -> SuiteReport:
    if inject_fault is not None and inject_fault not in FAULT_INJECTIONS:
        raise ValueError(f"unknown fault injection {inject_fault!r}; expected one of {FAULT_INJECTIONS}")
    config = config or StackConfig()
    if inject_fault == "clamp":
        config = dataclasses.replace(config, clamp_deg=25.0)

    stages = [
        ("unit-invariants", lambda: _check_unit_invariants(config)),
        ("codec-vectors", lambda: _check_codec_vectors(config)),
        ("thread-fidelity", lambda: _check_thread_fidelity(config, inject_fault == "bridge-cut")),
        ("shadow-unidirectional", lambda: _check_shadow_unidirectional(config)),
        ("twin-mirroring", lambda: _check_twin_mirroring(config)),
        ("one-meter", lambda: _check_one_meter(config)),
    ]
    checks = []
    for name, runner in stages:
        started = time.perf_counter()
        try:
            detail = runner()
            passed = True
        except (_CheckFailure, TwinError) as exc:
            detail = str(exc)
            passed = False
        checks.append(SuiteCheck(name, passed, detail, time.perf_counter() - started))
    return SuiteReport(tuple(checks), fault_injection=inject_fault)
