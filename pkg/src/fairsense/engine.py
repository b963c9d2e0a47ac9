"""Deterministic discrete-event core.

Integer-nanosecond clock, a stable-ordered event queue with lazy
cancellation, and a splittable random-number service that gives every
simulated entity its own reproducible stream.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SimulationError(RuntimeError):
    """Inconsistent use of the event machinery; always a simulator bug."""


class EventKind(Enum):
    FRAME_START = "frame-start"
    FRAME_END = "frame-end"
    BACKOFF = "backoff-slot"
    TIMER = "timer-expiry"
    EPOCH = "epoch-boundary"


@dataclass
class EventHandle:
    fire_time: int
    sequence: int
    kind: EventKind
    callback: Callable[[], None] = field(repr=False)
    cancelled: bool = False
    fired: bool = False

    def __lt__(self, other: "EventHandle") -> bool:
        # FIFO tie-break on equal fire times keeps replays bit-identical.
        return (self.fire_time, self.sequence) < (other.fire_time, other.sequence)


class EventQueue:
    """Single-threaded event loop over an integer-nanosecond clock.

    Events with equal fire times run in insertion order. Cancellation is
    lazy: handles are marked inert and skipped when popped, so cancel() is
    O(1) and the heap never needs re-sifting.
    """

    def __init__(self, log_events: bool = False):
        self.now: int = 0
        self._heap: list[EventHandle] = []
        self._seq: int = 0
        self.log: Optional[list[tuple[int, int, str]]] = [] if log_events else None

    def schedule(self, fire_time: int, kind: EventKind, callback: Callable[[], None]) -> EventHandle:
        if fire_time < self.now:
            raise SimulationError(
                f"event scheduled at t={fire_time} ns, before current clock {self.now} ns"
            )
        handle = EventHandle(int(fire_time), self._seq, kind, callback)
        self._seq += 1
        heapq.heappush(self._heap, handle)
        return handle

    def schedule_in(self, delay: int, kind: EventKind, callback: Callable[[], None]) -> EventHandle:
        return self.schedule(self.now + delay, kind, callback)

    def cancel(self, handle: EventHandle) -> bool:
        if handle.cancelled or handle.fired:
            return False
        handle.cancelled = True
        return True

    def run_until(self, t: int) -> int:
        """Process every pending event with fire_time <= t; leave clock at t."""
        if t < self.now:
            raise SimulationError(f"run_until({t}) is before current clock {self.now}")
        processed = 0
        heap = self._heap
        while heap and heap[0].fire_time <= t:
            handle = heapq.heappop(heap)
            if handle.cancelled:
                continue
            self.now = handle.fire_time
            handle.fired = True
            if self.log is not None:
                self.log.append((handle.fire_time, handle.sequence, handle.kind.value))
            handle.callback()
            processed += 1
        self.now = t
        return processed

    def pending(self) -> int:
        return sum(1 for h in self._heap if not h.cancelled)


# Stream domains are fixed tags so that a (domain, index) pair maps to the
# same generator no matter how many other streams a scenario creates.
_STREAM_DOMAINS = {
    "mac": 1,
    "fading": 2,
    "traffic": 3,
    "agent": 4,
    "scenario": 5,
    "shadowing": 6,
}


class RngService:
    """Counter-keyed random streams derived from one master seed.

    Each stream is an independent Philox generator keyed by
    (master_seed, domain_tag << 32 | index), so adding a node or flow never
    perturbs the draws of existing ones.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF

    def stream(self, domain: str, index: int = 0) -> np.random.Generator:
        try:
            tag = _STREAM_DOMAINS[domain]
        except KeyError:
            raise ValueError(f"unknown rng domain {domain!r}") from None
        if not 0 <= index < (1 << 32):
            raise ValueError(f"stream index {index} out of range")
        key = np.array([self.master_seed, (tag << 32) | index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
