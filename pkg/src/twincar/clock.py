"""Simulated time and deterministic task scheduling.

Every composition owns one ``VirtualClock`` and one ``Scheduler``. Tasks due
at the same instant run in ascending ``order`` (ties broken by insertion),
which is what makes full runs bit-for-bit reproducible: a command injected at
tick T always traverses relays, skill, emulators, and simulator in the same
sequence. Wall-clock pacing is layered on top (``RealTimePump``) and never
changes the event order.
"""

import heapq
import itertools
import threading
import time
from typing import Callable

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


def to_s(ns: int) -> float:
    return ns / NS_PER_S


class VirtualClock:
    """Monotonic nanosecond counter advanced explicitly by a scheduler."""

    def __init__(self, start_ns: int = 0) -> None:
        self._now_ns = start_ns

    @property
    def now_ns(self) -> int:
        return self._now_ns

    def advance_to(self, t_ns: int) -> None:
        if t_ns < self._now_ns:
            raise ValueError(f"clock cannot move backward ({t_ns} < {self._now_ns})")
        self._now_ns = t_ns


class MonotonicClock:
    """Wall-clock-backed clock with a per-run epoch at construction."""

    def __init__(self) -> None:
        self._epoch = time.monotonic_ns()

    @property
    def now_ns(self) -> int:
        return time.monotonic_ns() - self._epoch


class ScheduledTask:
    """Handle for a scheduled callback; ``cancel()`` is idempotent."""

    __slots__ = ("name", "fn", "period_ns", "order", "cancelled")

    def __init__(self, name: str, fn: Callable[[], None], period_ns: int | None, order: int) -> None:
        self.name = name
        self.fn = fn
        self.period_ns = period_ns
        self.order = order
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Scheduler:
    """Priority-queue event loop over a ``VirtualClock``.

    ``run_until`` executes every due event in (due_time, order, insertion)
    sequence and leaves the clock exactly at the target time. Periodic tasks
    re-arm themselves at ``due + period``.
    """

    def __init__(self, clock: VirtualClock) -> None:
        self.clock = clock
        self._heap: list[tuple[int, int, int, ScheduledTask]] = []
        self._counter = itertools.count()
        self._lock = threading.RLock()

    @property
    def now_ns(self) -> int:
        return self.clock.now_ns

    def add_periodic(
        self,
        name: str,
        period_ns: int,
        fn: Callable[[], None],
        order: int = 50,
        first_at_ns: int | None = None,
    ) -> ScheduledTask:
        if period_ns <= 0:
            raise ValueError("period must be positive")
        task = ScheduledTask(name, fn, period_ns, order)
        start = self.clock.now_ns if first_at_ns is None else max(first_at_ns, self.clock.now_ns)
        self._push(start, task)
        return task

    def call_at(self, t_ns: int, fn: Callable[[], None], order: int = 0, name: str = "oneshot") -> ScheduledTask:
        task = ScheduledTask(name, fn, None, order)
        self._push(max(t_ns, self.clock.now_ns), task)
        return task

    def call_in(self, delta_ns: int, fn: Callable[[], None], order: int = 0, name: str = "oneshot") -> ScheduledTask:
        return self.call_at(self.clock.now_ns + delta_ns, fn, order=order, name=name)

    def _push(self, due_ns: int, task: ScheduledTask) -> None:
        with self._lock:
            heapq.heappush(self._heap, (due_ns, task.order, next(self._counter), task))

    def next_due_ns(self) -> int | None:
        with self._lock:
            while self._heap and self._heap[0][3].cancelled:
                heapq.heappop(self._heap)
            return self._heap[0][0] if self._heap else None

    def run_until(self, t_ns: int) -> None:
        """Run every event due at or before ``t_ns``; clock ends at ``t_ns``."""
        with self._lock:
            while True:
                due = self.next_due_ns()
                if due is None or due > t_ns:
                    break
                due_ns, _order, _seq, task = heapq.heappop(self._heap)
                if task.cancelled:
                    continue
                self.clock.advance_to(due_ns)
                task.fn()
                if task.period_ns is not None and not task.cancelled:
                    self._push(due_ns + task.period_ns, task)
            self.clock.advance_to(t_ns)

    def run_for(self, delta_ns: int) -> None:
        self.run_until(self.clock.now_ns + delta_ns)

    def cancel_all(self) -> None:
        with self._lock:
            for _due, _order, _seq, task in self._heap:
                task.cancelled = True
            self._heap.clear()


class RealTimePump:
    """Background thread that advances a scheduler in step with wall time.

    Used by the service for long-running compositions; experiments and tests
    advance virtual time directly instead.
    """

    def __init__(self, scheduler: Scheduler, tick_s: float = 0.01) -> None:
        self._scheduler = scheduler
        self._tick_ns = to_ns(tick_s)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="twincar-pump", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        wall_epoch = time.monotonic_ns()
        sim_epoch = self._scheduler.now_ns
        while not self._stop.is_set():
            target = sim_epoch + (time.monotonic_ns() - wall_epoch)
            self._scheduler.run_until(target)
            time.sleep(self._tick_ns / NS_PER_S)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    @property
    def running(self) -> bool:
        return self._thread is not None and not self._stop.is_set()
