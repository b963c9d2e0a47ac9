"""Bursty application traffic.

Game-style uplink and video-style downlink are both periodic bursts whose
byte count jitters uniformly around a mean; a burst is fragmented into
MTU-sized MAC payloads. A recorded trace (time_ms, bytes rows) can replace
the synthetic model for any flow.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import NS_PER_MS, EventKind, EventQueue


@dataclass(frozen=True)
class BurstModel:
    interval_ns: int
    bytes_mean: int
    bytes_jitter: int = 0
    mtu: int = 1500
    start_offset_ns: int = 0

    def __post_init__(self):
        if self.interval_ns <= 0:
            raise ValueError("burst interval must be positive")
        if self.mtu <= 0:
            raise ValueError("MTU must be positive")
        if self.bytes_mean <= 0:
            raise ValueError("bytes_mean must be positive")
        if not 0 <= self.bytes_jitter < self.bytes_mean:
            raise ValueError("byte jitter must be in [0, bytes_mean)")

    @classmethod
    def from_rate(cls, rate_hz: float, bytes_mean: int, bytes_jitter: int = 0,
                  mtu: int = 1500, start_offset_ns: int = 0) -> "BurstModel":
        if rate_hz <= 0:
            raise ValueError("burst rate must be positive")
        return cls(interval_ns=round(1e9 / rate_hz), bytes_mean=bytes_mean,
                   bytes_jitter=bytes_jitter, mtu=mtu,
                   start_offset_ns=start_offset_ns)


def fragment(total_bytes: int, mtu: int) -> list[int]:
    """Split a burst into MTU-sized payloads; the tail keeps the remainder."""
    if total_bytes <= 0:
        return []
    full, rem = divmod(total_bytes, mtu)
    sizes = [mtu] * full
    if rem:
        sizes.append(rem)
    return sizes


def next_burst(model: BurstModel, rng: np.random.Generator,
               now_ns: int) -> tuple[int, list[int]]:
    """(next fire time, payload sizes for the burst due now)."""
    if model.bytes_jitter > 0:
        total = model.bytes_mean + int(rng.integers(-model.bytes_jitter,
                                                    model.bytes_jitter + 1))
    else:
        total = model.bytes_mean
    return now_ns + model.interval_ns, fragment(total, model.mtu)


class FlowGenerator:
    """Drives one src->dst flow: at each burst, hand fragments to the sink.

    The sink is called as sink(payload_bytes, now_ns) once per fragment and
    owns packet-id assignment and MAC enqueueing.
    """

    def __init__(self, engine: EventQueue, model: BurstModel,
                 rng: np.random.Generator, sink, horizon_ns: Optional[int] = None):
        self.engine = engine
        self.model = model
        self.rng = rng
        self.sink = sink
        self.horizon_ns = horizon_ns
        self.bursts_emitted = 0

    def start(self) -> None:
        self._schedule(self.engine.now + self.model.start_offset_ns)

    def _schedule(self, t_ns: int) -> None:
        if self.horizon_ns is not None and t_ns > self.horizon_ns:
            return
        self.engine.schedule(t_ns, EventKind.TIMER, self._fire)

    def _fire(self) -> None:
        now = self.engine.now
        nxt, sizes = next_burst(self.model, self.rng, now)
        self.bursts_emitted += 1
        for size in sizes:
            self.sink(size, now)
        self._schedule(nxt)


def load_trace(path: str | Path) -> list[tuple[int, int]]:
    """Read a (time_ms, bytes) CSV trace into (time_ns, bytes) rows."""
    rows: list[tuple[int, int]] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((round(float(row["time_ms"]) * NS_PER_MS),
                         int(row["bytes"])))
    rows.sort(key=lambda r: r[0])
    return rows


class TraceFlow:
    """Replays a recorded trace verbatim (sizes still fragment at the MTU)."""

    def __init__(self, engine: EventQueue, rows: list[tuple[int, int]],
                 mtu: int, sink):
        self.engine = engine
        self.rows = rows
        self.mtu = mtu
        self.sink = sink

    def start(self) -> None:
        for t_ns, total in self.rows:
            self.engine.schedule(
                t_ns, EventKind.TIMER,
                lambda total=total: self._emit(total))

    def _emit(self, total: int) -> None:
        for size in fragment(total, self.mtu):
            self.sink(size, self.engine.now)
