"""Driving experiments: timed full-speed runs and velocity-factor calibration.

The reference experiment drives the vehicle straight at full speed for a
fixed duration (1.45 s nominally covers one meter), measures the rear-right
wheel's displacement, and repeats. Calibration inverts it: adjust the
velocity factor until the measured distance hits the target, exploiting
that distance is strictly increasing (in fact linear) in the factor.

Everything runs in virtual time on the composition's scheduler — a trial
costs milliseconds of wall clock and is exactly reproducible.
"""

import dataclasses
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import CalibrationError
from .simulator import Wheel, per_step_noise
from .twin import ORDER_INJECT, Composition

DEFAULT_DURATION_S = 1.45
DEFAULT_TARGET_M = 1.0
NOISY_TOLERANCE_M = 0.05
EXACT_TOLERANCE_M = 1e-3

# Bisection: initial bracket, one widening retry, convergence residual.
SEARCH_BRACKET = (0.5, 2.0)
WIDE_BRACKET = (0.05, 20.0)
RESIDUAL_TOLERANCE_M = 1e-4
MAX_BISECTION_ITERATIONS = 60


@dataclass(frozen=True)
class TrialReport:
    index: int
    duration_s: float
    distance_m: float
    target_m: float
    deviation_m: float
    tolerance_m: float
    noise: bool
    passed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CalibrationResult:
    velocity_factor: float
    iterations: int
    residual_m: float
    trials: tuple[TrialReport, ...]

    @property
    def mean_deviation_m(self) -> float:
        return statistics.fmean(t.deviation_m for t in self.trials) if self.trials else 0.0

    @property
    def min_deviation_m(self) -> float:
        return min((t.deviation_m for t in self.trials), default=0.0)

    @property
    def max_deviation_m(self) -> float:
        return max((t.deviation_m for t in self.trials), default=0.0)

    def to_dict(self) -> dict:
        return {
            "velocity_factor": self.velocity_factor,
            "iterations": self.iterations,
            "residual_m": self.residual_m,
            "validation_trials": [t.to_dict() for t in self.trials],
            "mean_deviation_m": self.mean_deviation_m,
            "min_deviation_m": self.min_deviation_m,
            "max_deviation_m": self.max_deviation_m,
        }


def _vehicle_noise(composition: Composition, noise: bool) -> float | None:
    if not noise:
        return None
    configured = composition.config.sim.noise_stddev_m
    return configured if configured is not None else per_step_noise()


def run_trial(
    composition: Composition,
    duration_s: float = DEFAULT_DURATION_S,
    noise: bool = False,
    seed: int | None = None,
    target_m: float = DEFAULT_TARGET_M,
    tolerance_m: float | None = None,
    stop_delay_s: float = 0.0,
    index: int = 0,
) -> TrialReport:
    """One timed full-speed straight run from a fresh origin.

    ``stop_delay_s`` shifts only the stop command, demonstrating how far a
    late stop carries the vehicle past the target.
    """
    if duration_s < 0 or stop_delay_s < 0:
        raise CalibrationError("trial durations cannot be negative")
    if tolerance_m is None:
        tolerance_m = NOISY_TOLERANCE_M if noise else EXACT_TOLERANCE_M

    world = composition.vehicle_world()
    composition.reset_worlds(seed)
    world.set_noise(_vehicle_noise(composition, noise))

    start = world.wheel_position(Wheel.REAR_RIGHT)
    tick_ns = round(world.config.timestep_s * 1e9)
    t_start = (composition.clock.now_ns // tick_ns + 1) * tick_ns
    t_stop = t_start + round(duration_s * 1e9) + round(stop_delay_s * 1e9)
    composition.scheduler.call_at(
        t_start, lambda: composition.send_command(0.0, 1.0), order=ORDER_INJECT, name="trial-start"
    )
    composition.scheduler.call_at(
        t_stop, lambda: composition.send_command(0.0, 0.0), order=ORDER_INJECT, name="trial-stop"
    )
    composition.scheduler.run_until(t_stop + 2 * tick_ns)

    end = world.wheel_position(Wheel.REAR_RIGHT)
    distance = math.hypot(end[0] - start[0], end[1] - start[1])
    deviation = distance - target_m
    return TrialReport(
        index=index,
        duration_s=duration_s,
        distance_m=distance,
        target_m=target_m,
        deviation_m=deviation,
        tolerance_m=tolerance_m,
        noise=noise,
        passed=abs(deviation) <= tolerance_m,
    )


def run_one_meter_trial(
    composition: Composition,
    duration_s: float = DEFAULT_DURATION_S,
    repetitions: int = 10,
    noise: bool = True,
    target_m: float = DEFAULT_TARGET_M,
    tolerance_m: float | None = None,
    stop_delay_s: float = 0.0,
) -> list[TrialReport]:
    """The repeated experiment: same settings, fresh seed per repetition."""
    base_seed = composition.config.sim.seed
    return [
        run_trial(
            composition,
            duration_s=duration_s,
            noise=noise,
            seed=base_seed + i,
            target_m=target_m,
            tolerance_m=tolerance_m,
            stop_delay_s=stop_delay_s,
            index=i,
        )
        for i in range(repetitions)
    ]


def _set_velocity_factor(composition: Composition, velocity_factor: float) -> None:
    for world in (composition.pt_world, composition.dt_world):
        if world is not None:
            world.config = dataclasses.replace(world.config, velocity_factor=velocity_factor)


def calibrate_velocity_factor(
    composition: Composition,
    target_m: float = DEFAULT_TARGET_M,
    duration_s: float = DEFAULT_DURATION_S,
    residual_tolerance_m: float = RESIDUAL_TOLERANCE_M,
    validation_trials: int = 10,
) -> CalibrationResult:
    """Bisect the velocity factor until the noise-free run hits the target,
    then validate with noisy repetitions at the fitted factor."""
    iterations = 0

    def distance_at(velocity_factor: float) -> float:
        nonlocal iterations
        iterations += 1
        _set_velocity_factor(composition, velocity_factor)
        return run_trial(composition, duration_s=duration_s, noise=False, target_m=target_m).distance_m

    lo, hi = SEARCH_BRACKET
    f_lo, f_hi = distance_at(lo) - target_m, distance_at(hi) - target_m
    if not (f_lo <= 0 <= f_hi):
        lo, hi = WIDE_BRACKET
        f_lo, f_hi = distance_at(lo) - target_m, distance_at(hi) - target_m
        if not (f_lo <= 0 <= f_hi):
            raise CalibrationError(
                f"target {target_m} m not bracketed even by velocity factors {lo}..{hi}"
            )

    mid, residual = lo, abs(f_lo)
    for _ in range(MAX_BISECTION_ITERATIONS):
        mid = (lo + hi) / 2
        f_mid = distance_at(mid) - target_m
        residual = abs(f_mid)
        if residual <= residual_tolerance_m:
            break
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise CalibrationError(
            f"bisection did not converge: residual {residual:.2e} m after {iterations} runs"
        )

    _set_velocity_factor(composition, mid)
    trials = run_one_meter_trial(
        composition, duration_s=duration_s, repetitions=validation_trials, noise=True, target_m=target_m
    )
    composition.reset_worlds()
    composition.vehicle_world().set_noise(None)
    return CalibrationResult(
        velocity_factor=mid, iterations=iterations, residual_m=residual, trials=tuple(trials)
    )


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    """One JSON object per line — the CI-artifact report format."""
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
