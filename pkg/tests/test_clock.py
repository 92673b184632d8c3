"""Deterministic scheduling: event order, periodic re-arm, wall-clock pump."""

import time

import pytest

from twincar.clock import RealTimePump, Scheduler, VirtualClock, to_ns, to_s


def test_unit_helpers():
    assert to_ns(0.01) == 10_000_000
    assert to_s(1_500_000_000) == 1.5


def test_clock_never_moves_backward(clock):
    clock.advance_to(10)
    with pytest.raises(ValueError):
        clock.advance_to(9)


def test_run_until_leaves_clock_exactly_at_target(scheduler):
    scheduler.run_until(123_456)
    assert scheduler.now_ns == 123_456


def test_same_instant_events_run_in_order_then_insertion(scheduler):
    seen = []
    scheduler.call_at(100, lambda: seen.append("b"), order=20)
    scheduler.call_at(100, lambda: seen.append("a"), order=10)
    scheduler.call_at(100, lambda: seen.append("c"), order=20)  # same order: insertion wins
    scheduler.call_at(50, lambda: seen.append("first"), order=99)
    scheduler.run_until(100)
    assert seen == ["first", "a", "b", "c"]


def test_callback_sees_its_due_time(scheduler):
    stamps = []
    scheduler.call_at(77, lambda: stamps.append(scheduler.now_ns))
    scheduler.run_until(200)
    assert stamps == [77]


def test_periodic_rearms_at_due_plus_period(scheduler):
    stamps = []
    scheduler.add_periodic("tick", 10, lambda: stamps.append(scheduler.now_ns))
    scheduler.run_until(35)
    assert stamps == [0, 10, 20, 30]


def test_periodic_first_run_can_be_deferred(scheduler):
    stamps = []
    scheduler.add_periodic("late", 10, lambda: stamps.append(scheduler.now_ns), first_at_ns=25)
    scheduler.run_until(50)
    assert stamps == [25, 35, 45]


def test_call_at_in_the_past_clamps_to_now(clock, scheduler):
    clock.advance_to(1_000)
    stamps = []
    scheduler.call_at(5, lambda: stamps.append(scheduler.now_ns))
    scheduler.run_until(1_000)
    assert stamps == [1_000]


def test_cancel_prevents_execution(scheduler):
    ran = []
    task = scheduler.call_at(10, lambda: ran.append(1))
    task.cancel()
    scheduler.run_until(20)
    assert ran == []


def test_cancel_periodic_stops_rearming(scheduler):
    count = [0]
    task = scheduler.add_periodic("t", 10, lambda: count.__setitem__(0, count[0] + 1))
    scheduler.run_until(25)
    task.cancel()
    scheduler.run_until(100)
    assert count[0] == 3  # runs at 0, 10, 20 only


def test_cancel_all(scheduler):
    ran = []
    scheduler.call_at(5, lambda: ran.append(1))
    scheduler.add_periodic("p", 10, lambda: ran.append(2))
    scheduler.cancel_all()
    scheduler.run_until(50)
    assert ran == []


def test_task_scheduled_during_run_executes_in_same_pass(scheduler):
    seen = []

    def outer():
        scheduler.call_at(scheduler.now_ns + 5, lambda: seen.append("inner"))

    scheduler.call_at(10, outer)
    scheduler.run_until(20)
    assert seen == ["inner"]


def test_zero_or_negative_period_rejected(scheduler):
    with pytest.raises(ValueError):
        scheduler.add_periodic("bad", 0, lambda: None)


def test_identical_runs_produce_identical_histories():
    def run():
        clock = VirtualClock()
        sched = Scheduler(clock)
        history = []
        sched.add_periodic("a", 7, lambda: history.append(("a", sched.now_ns)), order=2)
        sched.add_periodic("b", 5, lambda: history.append(("b", sched.now_ns)), order=1)
        sched.run_until(100)
        return history

    assert run() == run()


def test_realtime_pump_advances_and_restarts():
    clock = VirtualClock()
    scheduler = Scheduler(clock)
    pump = RealTimePump(scheduler, tick_s=0.001)
    pump.start()
    assert pump.running
    deadline = time.monotonic() + 2.0
    while clock.now_ns < 5_000_000 and time.monotonic() < deadline:
        time.sleep(0.005)
    pump.stop()
    assert not pump.running
    assert clock.now_ns >= 5_000_000

    frozen = clock.now_ns
    time.sleep(0.02)
    assert clock.now_ns == frozen  # stopped pump leaves virtual time alone

    pump.start()  # must come back after a stop
    assert pump.running
    deadline = time.monotonic() + 2.0
    while clock.now_ns < frozen + 1_000_000 and time.monotonic() < deadline:
        time.sleep(0.005)
    pump.stop()
    assert clock.now_ns > frozen
