"""Planar vehicle kinematics: steering geometry and pose integration."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twincar.errors import SimulationError
from twincar.messaging.bus import TopicKind
from twincar.protocol import JOINT_COMMAND_SCHEMA, JOINT_TOPICS, POSE_SCHEMA, POSE_TOPIC, Joint
from twincar.simulator import (
    DEFAULT_V_MAX_MPS,
    SimConfig,
    VehicleGeometry,
    Wheel,
    World,
    ackermann_wheel_angles,
    center_angle_from_joints,
    per_step_noise,
)


def test_default_geometry_and_speed():
    geom = VehicleGeometry()
    assert (geom.wheelbase_m, geom.track_m, geom.wheel_radius_m) == (0.095, 0.085, 0.0325)
    assert DEFAULT_V_MAX_MPS == pytest.approx(1.0 / 1.45)


def test_geometry_validation():
    with pytest.raises(SimulationError):
        VehicleGeometry(wheelbase_m=0)
    with pytest.raises(SimulationError):
        VehicleGeometry(track_m=-0.1)
    with pytest.raises(SimulationError):
        VehicleGeometry(wheelbase_m=0.05, track_m=0.11)  # track >= 2 * wheelbase


def test_sim_config_validation():
    with pytest.raises(SimulationError):
        SimConfig(timestep_s=0)
    with pytest.raises(SimulationError):
        SimConfig(velocity_factor=0)
    with pytest.raises(SimulationError):
        SimConfig(v_max_mps=-1)
    with pytest.raises(SimulationError):
        SimConfig(noise_stddev_m=-0.01)


def test_wheel_omega_max_excludes_velocity_factor(geometry):
    fast = SimConfig(velocity_factor=2.0)
    slow = SimConfig(velocity_factor=0.5)
    assert fast.wheel_omega_max(geometry) == slow.wheel_omega_max(geometry)
    assert fast.wheel_omega_max(geometry) == pytest.approx(DEFAULT_V_MAX_MPS / 0.0325)


def test_ackermann_angles_frozen_values(geometry):
    # Independently computed from R = L/tan(delta), atan(L/(R -/+ W/2)).
    inner, outer = ackermann_wheel_angles(geometry, 20.0)
    assert inner == pytest.approx(23.49757284614155, abs=1e-12)
    assert outer == pytest.approx(17.380336516610193, abs=1e-12)
    inner5, outer5 = ackermann_wheel_angles(geometry, 5.0)
    assert inner5 == pytest.approx(5.202573923551099, abs=1e-12)
    assert outer5 == pytest.approx(4.812574457563202, abs=1e-12)


def test_ackermann_inner_sharper_outer_shallower(geometry):
    inner, outer = ackermann_wheel_angles(geometry, 15.0)
    assert outer < 15.0 < inner


def test_ackermann_mirror_symmetry(geometry):
    inner_r, outer_r = ackermann_wheel_angles(geometry, 12.0)
    inner_l, outer_l = ackermann_wheel_angles(geometry, -12.0)
    assert (inner_l, outer_l) == (-inner_r, -outer_r)


def test_ackermann_straight_and_limits(geometry):
    assert ackermann_wheel_angles(geometry, 0.0) == (0.0, 0.0)
    with pytest.raises(SimulationError):
        ackermann_wheel_angles(geometry, 40.0)
    with pytest.raises(SimulationError):
        ackermann_wheel_angles(geometry, -40.0)
    ackermann_wheel_angles(geometry, 39.99)  # just inside the limit


@settings(max_examples=150, deadline=None)
@given(st.floats(min_value=-39.9, max_value=39.9))
def test_center_angle_reconstruction_is_inverse(steering_deg):
    geometry = VehicleGeometry()
    inner, outer = ackermann_wheel_angles(geometry, steering_deg)
    # Positive steering turns right; the right wheel is then the inner one.
    right, left = (inner, outer) if steering_deg >= 0 else (outer, inner)
    assert center_angle_from_joints(geometry, left, right) == pytest.approx(
        steering_deg, abs=1e-9
    )


def test_center_angle_zero(geometry):
    assert center_angle_from_joints(geometry, 0.0, 0.0) == 0.0


def _drive_straight(world, steps, omega):
    world.set_joint(Joint.REAR_LEFT_WHEEL, omega)
    world.set_joint(Joint.REAR_RIGHT_WHEEL, omega)
    for _ in range(steps):
        world.step()


def test_straight_line_distance_is_exact(geometry):
    # Full-duty wheels for 145 steps of 10 ms at v_max = 1/1.45 -> exactly 1 m.
    config = SimConfig()
    world = World(geometry, config)
    _drive_straight(world, 145, config.wheel_omega_max(geometry))
    assert world.pose.x_m == pytest.approx(1.0, abs=1e-12)
    assert world.pose.y_m == 0.0
    assert world.pose.heading_rad == 0.0


def test_distance_scales_linearly_with_velocity_factor(geometry):
    def distance(k):
        config = SimConfig(velocity_factor=k)
        world = World(geometry, config)
        _drive_straight(world, 145, config.wheel_omega_max(geometry))
        return world.pose.x_m

    d1, d2 = distance(1.0), distance(2.0)
    assert d2 == pytest.approx(2 * d1, rel=1e-12)


def test_motion_uses_old_heading_then_turns(geometry):
    # One step from heading 0: position moves along +x even though the
    # heading changes within the same step (move-then-turn Euler).
    world = World(geometry, SimConfig())
    inner, outer = ackermann_wheel_angles(geometry, 20.0)
    world.set_joint(Joint.STEERING_RIGHT, inner)
    world.set_joint(Joint.STEERING_LEFT, outer)
    omega = SimConfig().wheel_omega_max(geometry)
    world.set_joint(Joint.REAR_LEFT_WHEEL, omega)
    world.set_joint(Joint.REAR_RIGHT_WHEEL, omega)
    pose = world.step()
    assert pose.y_m == 0.0
    assert pose.x_m > 0
    assert pose.heading_rad != 0.0


def test_steering_sign_drives_heading_sign(geometry):
    def final_pose(steering_deg):
        world = World(geometry, SimConfig())
        inner, outer = ackermann_wheel_angles(geometry, steering_deg)
        right, left = (inner, outer) if steering_deg >= 0 else (outer, inner)
        world.set_joint(Joint.STEERING_RIGHT, right)
        world.set_joint(Joint.STEERING_LEFT, left)
        _drive_straight(world, 20, SimConfig().wheel_omega_max(geometry))
        return world.pose

    pos, neg = final_pose(10.0), final_pose(-10.0)
    assert pos.heading_rad > 0 > neg.heading_rad
    # mirror-symmetric trajectories
    assert pos.x_m == pytest.approx(neg.x_m, abs=1e-12)
    assert pos.y_m == pytest.approx(-neg.y_m, abs=1e-12)


def test_circle_closure(geometry):
    # Construct a wheel speed so 400 steps sweep exactly 2*pi: the Euler
    # polygon closes back on the start within a millimeter.
    config = SimConfig()
    world = World(geometry, config)
    steering = 15.0
    inner, outer = ackermann_wheel_angles(geometry, steering)
    world.set_joint(Joint.STEERING_RIGHT, inner)
    world.set_joint(Joint.STEERING_LEFT, outer)
    dtheta = 2 * math.pi / 400
    omega = (dtheta * geometry.wheelbase_m) / (
        config.velocity_factor
        * geometry.wheel_radius_m
        * math.tan(math.radians(steering))
        * config.timestep_s
    )
    _drive_straight(world, 400, omega)
    assert math.hypot(world.pose.x_m, world.pose.y_m) < 1e-3
    assert abs(world.pose.heading_rad) < 1e-9  # wrapped back to 0


def test_heading_stays_normalized(geometry):
    world = World(geometry, SimConfig())
    inner, outer = ackermann_wheel_angles(geometry, 30.0)
    world.set_joint(Joint.STEERING_RIGHT, inner)
    world.set_joint(Joint.STEERING_LEFT, outer)
    omega = SimConfig().wheel_omega_max(geometry)
    world.set_joint(Joint.REAR_LEFT_WHEEL, omega)
    world.set_joint(Joint.REAR_RIGHT_WHEEL, omega)
    for _ in range(2000):
        pose = world.step()
        assert -math.pi < pose.heading_rad <= math.pi


def test_noise_only_drawn_while_moving(geometry):
    world = World(geometry, SimConfig(noise_stddev_m=0.01, seed=7))
    for _ in range(50):
        world.step()
    assert world.pose == world.pose.__class__(0.0, 0.0, 0.0)  # rest is a fixed point

    _drive_straight(world, 10, 1.0)
    moved = world.pose
    assert moved.y_m != 0.0  # noise actually applied once moving


def test_noise_is_seed_deterministic(geometry):
    def run(seed):
        world = World(geometry, SimConfig(noise_stddev_m=0.005, seed=seed))
        _drive_straight(world, 50, 5.0)
        return world.pose

    assert run(3) == run(3)
    assert run(3) != run(4)


def test_reset_restores_initial_state_and_rng(geometry):
    world = World(geometry, SimConfig(noise_stddev_m=0.005, seed=11))
    _drive_straight(world, 30, 5.0)
    first = world.pose
    world.reset()
    assert world.pose == world.pose.__class__(0.0, 0.0, 0.0)
    assert world.step_count == 0
    assert world.joints[Joint.REAR_LEFT_WHEEL] == 0.0
    _drive_straight(world, 30, 5.0)
    assert world.pose == first  # same seed, same trajectory

    world.reset(seed=12)
    _drive_straight(world, 30, 5.0)
    assert world.pose != first


def test_wheel_positions_follow_rigid_body(geometry):
    world = World(geometry, SimConfig())
    rr = world.wheel_position(Wheel.REAR_RIGHT)
    rl = world.wheel_position(Wheel.REAR_LEFT)
    fr = world.wheel_position(Wheel.FRONT_RIGHT)
    fl = world.wheel_position(Wheel.FRONT_LEFT)
    assert rr == (0.0, 0.0, 0.0)
    assert rl == (0.0, pytest.approx(0.085), 0.0)
    assert fr == (pytest.approx(0.095), 0.0, 0.0)
    assert fl == (pytest.approx(0.095), pytest.approx(0.085), 0.0)

    # Rigid-body distances are invariant under motion.
    inner, outer = ackermann_wheel_angles(geometry, 20.0)
    world.set_joint(Joint.STEERING_RIGHT, inner)
    world.set_joint(Joint.STEERING_LEFT, outer)
    _drive_straight(world, 37, 10.0)
    rr2, fl2 = world.wheel_position(Wheel.REAR_RIGHT), world.wheel_position(Wheel.FRONT_LEFT)
    diag = math.hypot(0.095, 0.085)
    assert math.hypot(fl2[0] - rr2[0], fl2[1] - rr2[1]) == pytest.approx(diag, abs=1e-12)


def test_per_step_noise_accumulates_to_total():
    per_step = per_step_noise(0.01, 145)
    assert per_step * math.sqrt(145) == pytest.approx(0.01)


def test_world_consumes_joint_topics_and_publishes_pose(registry, clock, geometry):
    bus = registry.create_bus("sim", clock)
    for name in JOINT_TOPICS:
        bus.register_topic(name, TopicKind.COMMAND, JOINT_COMMAND_SCHEMA)
    bus.register_topic(POSE_TOPIC, TopicKind.DATA, POSE_SCHEMA)
    pose_sub = bus.subscribe(POSE_TOPIC)

    world = World(geometry, SimConfig(), bus=bus, clock=clock)
    omega = SimConfig().wheel_omega_max(geometry)
    for joint in (Joint.REAR_LEFT_WHEEL, Joint.REAR_RIGHT_WHEEL):
        bus.publish(joint.topic, {"joint": joint.value, "value": omega, "timestamp_ns": 0})
    world.step()

    assert world.joints[Joint.REAR_LEFT_WHEEL] == pytest.approx(omega)
    poses = [e.decode() for e in pose_sub.drain()]
    assert len(poses) == 1
    assert poses[0]["x"] == pytest.approx(DEFAULT_V_MAX_MPS * 0.01)
    assert poses[0]["z"] == 0.0


def test_attach_steps_on_schedule(registry, clock, geometry):
    from twincar.clock import Scheduler

    bus = registry.create_bus("sim-sched", clock)
    for name in JOINT_TOPICS:
        bus.register_topic(name, TopicKind.COMMAND, JOINT_COMMAND_SCHEMA)
    bus.register_topic(POSE_TOPIC, TopicKind.DATA, POSE_SCHEMA)
    world = World(geometry, SimConfig(), bus=bus, clock=clock)
    scheduler = Scheduler(clock)
    world.attach(scheduler)
    scheduler.run_until(100_000_000)  # 0.1 s -> steps at 0.00..0.10 inclusive
    assert world.step_count == 11
