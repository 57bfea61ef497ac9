"""Deterministic discrete-event loop in integer-microsecond virtual time.

Events execute in (time_us, seq) order; seq is the insertion sequence, so
races between same-time events are reproducible. An optional pacing factor
slows wall-clock playback for interactive runs but never alters order.
Externally injected work enters through a thread-safe queue and is
timestamped at the next loop iteration.
"""

from __future__ import annotations

import heapq
import threading
import time as _time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional

from .errors import TimeViolation


class EventKind(str, Enum):
    FRAME_ARRIVAL = "FrameArrival"
    HEARTBEAT_DUE = "HeartbeatDue"
    COMMAND_DELIVERY = "CommandDelivery"
    LINK_FAIL = "LinkFail"
    LINK_RESTORE = "LinkRestore"
    NODE_FAIL = "NodeFail"
    NODE_RESTORE = "NodeRestore"
    ATTACK_INJECT = "AttackInject"
    TIMER_EXPIRY = "TimerExpiry"


@dataclass
class SimClock:
    now_us: int = 0


@dataclass(order=True)
class Event:
    time_us: int
    seq: int
    kind: EventKind = field(compare=False)
    subject: str = field(compare=False)
    action: Callable[[], None] = field(compare=False)
    cancelled: bool = field(compare=False, default=False)


class EventHandle:
    def __init__(self, event: Event):
        self._event = event

    def cancel(self) -> None:
        self._event.cancelled = True

    @property
    def time_us(self) -> int:
        return self._event.time_us


@dataclass(frozen=True)
class TraceRecord:
    time_us: int
    seq: int
    kind: str
    subject: str


# Sequence band for scenario-script and REPL-injected events. Keeping these
# apart from ordinary insertion sequences makes a replayed script order
# identically to the original run regardless of when injection happened.
SCENARIO_SEQ_BASE = 1_000_000_000


class Engine:
    def __init__(self, pace: Optional[float] = None):
        self.clock = SimClock()
        self.pace = pace
        self._heap: List[Event] = []
        self._next_seq = 0
        self._next_scenario_seq = SCENARIO_SEQ_BASE
        self.trace: List[TraceRecord] = []
        self._injected: List[Callable[["Engine"], None]] = []
        self._inject_lock = threading.Lock()
        self.stopped = False
        self.finished = False

    def schedule(self, time_us: int, kind: EventKind, subject: str,
                 action: Callable[[], None], scenario: bool = False) -> EventHandle:
        """Enqueue an event; scenario events draw from a reserved seq band."""
        if time_us < self.clock.now_us:
            raise TimeViolation(
                f"schedule at {time_us} before now {self.clock.now_us}")
        if scenario:
            seq = self._next_scenario_seq
            self._next_scenario_seq += 1
        else:
            seq = self._next_seq
            self._next_seq += 1
        event = Event(time_us, seq, kind, subject, action)
        heapq.heappush(self._heap, event)
        return EventHandle(event)

    def schedule_in(self, delay_us: int, kind: EventKind, subject: str,
                    action: Callable[[], None]) -> EventHandle:
        return self.schedule(self.clock.now_us + delay_us, kind, subject, action)

    def inject(self, thunk: Callable[["Engine"], None]) -> None:
        """Hand work to the loop from another thread; runs at the next iteration."""
        with self._inject_lock:
            self._injected.append(thunk)

    def pending_injections(self) -> int:
        with self._inject_lock:
            return len(self._injected)

    def stop(self) -> None:
        self.stopped = True

    def _drain_injected(self) -> None:
        with self._inject_lock:
            pending, self._injected = self._injected, []
        for thunk in pending:
            thunk(self)

    def run_until(self, t_end_us: int) -> List[TraceRecord]:
        """Process every event with time <= t_end_us; leave the clock at t_end_us."""
        if t_end_us < self.clock.now_us:
            raise TimeViolation(
                f"run_until {t_end_us} before now {self.clock.now_us}")
        start_len = len(self.trace)
        while not self.stopped:
            self._drain_injected()
            if not self._heap:
                break
            event = self._heap[0]
            if event.cancelled:
                heapq.heappop(self._heap)
                continue
            if event.time_us > t_end_us:
                break
            if self.pace:
                wait_s = (event.time_us - self.clock.now_us) * 1e-6 / self.pace
                if wait_s > 0:
                    _time.sleep(min(wait_s, 1.0))
            heapq.heappop(self._heap)
            self.clock.now_us = event.time_us
            self.trace.append(TraceRecord(
                event.time_us, event.seq, event.kind.value, event.subject))
            event.action()
        if not self.stopped:
            self.clock.now_us = t_end_us
        self.finished = True
        return self.trace[start_len:]
