"""CSMA/CA distributed coordination: frames, timing math, and the per-node
MAC state machine.

Each node (AP or station) runs the same DCF engine: DIFS wait, binary
exponential backoff with freeze/resume, an RTS/CTS/DATA/ACK exchange with
SIFS spacing, NAV-based virtual carrier sense, retransmission with a retry
limit, and a drop-tail transmit queue. Reception outcomes come from the
medium (decode gates over interference), never from an abstract collision
shortcut.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum, auto
from typing import Callable, Optional

import numpy as np

from .channel import Thresholds, carrier_sense_busy, dbm_to_watt
from .engine import NS_PER_US, EventKind, EventQueue, SimulationError


class MacProtocolError(SimulationError):
    """An illegal (phase, event) combination; always a simulator bug."""


class FrameKind(Enum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"


# MAC header sizes in bytes, FCS included.
HEADER_BYTES = {
    FrameKind.RTS: 20,
    FrameKind.CTS: 14,
    FrameKind.ACK: 14,
    FrameKind.DATA: 34,
}


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    src: str
    dst: str
    duration_us: int            # NAV value carried in the header
    airtime_ns: int
    payload_bytes: int = 0      # 0 for control frames
    packet_id: Optional[int] = None
    exchange_id: Optional[int] = None


@dataclass
class Packet:
    """A queued MAC payload awaiting delivery."""

    packet_id: int
    dst: str
    payload_bytes: int
    enqueue_ns: int
    flow: Optional[str] = None  # "uplink" / "downlink" for tracked traffic


def frame_airtime_ns(payload_bytes: int, rate_mbps: float, preamble_ns: int,
                     header_bytes: int) -> int:
    """Preamble plus payload+header serialization time, ceiled to whole ns."""
    if rate_mbps <= 0:
        raise ValueError("rate must be positive")
    bits = 8 * (payload_bytes + header_bytes)
    numerator = bits * 1000  # rate is in bits per microsecond
    if float(rate_mbps).is_integer():
        rate = int(rate_mbps)
        tx_ns = numerator // rate + (1 if numerator % rate else 0)
    else:
        tx_ns = math.ceil(numerator / rate_mbps)
    return int(preamble_ns) + int(tx_ns)


def us_ceil(t_ns: int) -> int:
    return (t_ns + NS_PER_US - 1) // NS_PER_US


@dataclass(frozen=True)
class MacTimings:
    """DCF constants. 5 GHz OFDM values by default; DIFS is derived."""

    slot_ns: int = 9_000
    sifs_ns: int = 16_000
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7
    rts_threshold_bytes: int = 0      # 0: RTS/CTS protects every DATA frame
    queue_limit: int = 1000
    data_rate_mbps: float = 24.0
    control_rate_mbps: float = 24.0
    preamble_ns: int = 20_000

    def __post_init__(self):
        if self.sifs_ns % NS_PER_US:
            raise ValueError("SIFS must be a whole number of microseconds")
        if self.cw_min < 0 or self.cw_max < self.cw_min:
            raise ValueError("contention window bounds are inconsistent")

    @property
    def difs_ns(self) -> int:
        return self.sifs_ns + 2 * self.slot_ns

    @property
    def sifs_us(self) -> int:
        return self.sifs_ns // NS_PER_US

    def control_airtime_ns(self, kind: FrameKind) -> int:
        return frame_airtime_ns(0, self.control_rate_mbps, self.preamble_ns,
                                HEADER_BYTES[kind])

    @property
    def rts_airtime_ns(self) -> int:
        return self.control_airtime_ns(FrameKind.RTS)

    @property
    def cts_airtime_ns(self) -> int:
        return self.control_airtime_ns(FrameKind.CTS)

    @property
    def ack_airtime_ns(self) -> int:
        return self.control_airtime_ns(FrameKind.ACK)

    @property
    def cts_airtime_us(self) -> int:
        return us_ceil(self.cts_airtime_ns)

    def data_airtime_ns(self, payload_bytes: int) -> int:
        return frame_airtime_ns(payload_bytes, self.data_rate_mbps,
                                self.preamble_ns, HEADER_BYTES[FrameKind.DATA])

    @property
    def cts_timeout_ns(self) -> int:
        return self.sifs_ns + self.cts_airtime_ns + 2 * self.slot_ns

    @property
    def ack_timeout_ns(self) -> int:
        return self.sifs_ns + self.ack_airtime_ns + 2 * self.slot_ns

    # NAV duration chaining: the RTS reserves the rest of the exchange; each
    # later frame carries the remainder, so overhearing any one of them
    # protects the same end time.
    def rts_duration_us(self, payload_bytes: int) -> int:
        return (3 * self.sifs_us
                + us_ceil(self.cts_airtime_ns)
                + us_ceil(self.data_airtime_ns(payload_bytes))
                + us_ceil(self.ack_airtime_ns))

    def cts_duration_us(self, rts_duration_us: int) -> int:
        return max(0, rts_duration_us - us_ceil(self.cts_airtime_ns) - self.sifs_us)

    def data_duration_us(self) -> int:
        return self.sifs_us + us_ceil(self.ack_airtime_ns)


def exchange_duration_ns(payload_bytes: int, timings: MacTimings) -> int:
    """Full RTS+SIFS+CTS+SIFS+DATA+SIFS+ACK span in exact nanoseconds."""
    return (timings.rts_airtime_ns + timings.cts_airtime_ns
            + timings.data_airtime_ns(payload_bytes) + timings.ack_airtime_ns
            + 3 * timings.sifs_ns)


def next_backoff(cw: int, rng: np.random.Generator) -> int:
    """Uniform slot count in [0, cw]."""
    if cw < 0:
        raise ValueError("contention window must be non-negative")
    if cw == 0:
        return 0
    return int(rng.integers(0, cw + 1))


def bump_cw(cw: int, cw_max: int) -> int:
    return min(2 * (cw + 1) - 1, cw_max)


def updated_nav(nav_until_ns: int, now_ns: int, frame: Frame, own_addr: str) -> int:
    """NAV rule for an overheard frame: extend, never shrink; ignore frames
    addressed to this node."""
    if frame.dst == own_addr:
        return nav_until_ns
    return max(nav_until_ns, now_ns + frame.duration_us * NS_PER_US)


class Phase(Enum):
    IDLE = auto()        # transmit queue empty
    DEFER = auto()       # pending frame, waiting out busy medium / NAV
    DIFS_WAIT = auto()
    BACKOFF = auto()
    TX_RTS = auto()
    AWAIT_CTS = auto()
    TX_DATA = auto()
    AWAIT_ACK = auto()


_CONTENTION_PHASES = (Phase.IDLE, Phase.DEFER, Phase.DIFS_WAIT, Phase.BACKOFF)


@dataclass
class MacStats:
    data_sent: int = 0
    delivered: int = 0
    retries: int = 0
    dropped_retry: int = 0
    dropped_queue: int = 0


class DcfNode:
    """One 802.11 DCF station or AP attached to a medium and event queue.

    The contention machine (DIFS, backoff, exchange) drives frames from the
    transmit queue; an independent responder path answers decoded RTS/DATA
    with SIFS-spaced CTS/ACK. The medium owns the `transmitting` flag and
    keeps `sensed_power_w` up to date; this class reacts to edges via
    `_reevaluate`.
    """

    def __init__(self, name: str, engine: EventQueue, timings: MacTimings,
                 thresholds: Thresholds, rng: np.random.Generator,
                 is_ap: bool = False, ap_name: Optional[str] = None,
                 allow_retune: bool = False):
        self.name = name
        self.engine = engine
        self.timings = timings
        self.thresholds = thresholds
        self.rng = rng
        self.is_ap = is_ap
        self.ap_name = ap_name
        self.allow_retune = allow_retune

        self.medium = None  # set when registered with a Medium

        self.phase = Phase.IDLE
        self.cw = timings.cw_min
        self.backoff_slots = 0
        self.retry_count = 0
        self.nav_until = 0
        self.queue: deque[Packet] = deque()

        self.transmitting = False
        self.sensed_power_w = 0.0
        self.sensed_busy = False

        self.stats = MacStats()
        self._seen_packet_ids: set[int] = set()

        self._difs_timer = None
        self._backoff_timer = None
        self._timeout_timer = None
        self._response_timer = None
        self._nav_wake = None
        self._backoff_started = 0
        self._response_pending = False
        self._response_frame: Optional[Frame] = None
        self._current_exchange: Optional[int] = None

        # Wiring points, all optional.
        self.on_data_received: Optional[Callable[[Frame, int], None]] = None
        self.on_packet_dropped: Optional[Callable[[Packet, int, str], None]] = None
        self.on_exchange_complete: Optional[Callable[[Packet, int], None]] = None
        self.on_decoded: Optional[Callable[[Frame, float, int], None]] = None

    # -- configuration ----------------------------------------------------

    def set_thresholds(self, thresholds: Thresholds) -> None:
        """Runtime retune; only the adaptive node may do this."""
        if not self.allow_retune:
            raise ValueError(f"node {self.name} has fixed radio parameters")
        self.thresholds = thresholds
        if self.medium is not None:
            self.medium.refresh_busy(self)

    @property
    def cst_w(self) -> float:
        return dbm_to_watt(self.thresholds.cst_dbm)

    # -- queue entry -------------------------------------------------------

    def enqueue(self, packet: Packet) -> bool:
        if len(self.queue) >= self.timings.queue_limit:
            self.stats.dropped_queue += 1
            if self.on_packet_dropped is not None:
                self.on_packet_dropped(packet, self.engine.now, "queue-full")
            return False
        self.queue.append(packet)
        if self.phase is Phase.IDLE:
            self._start_contention(fresh_draw=True)
        return True

    # -- contention machine ------------------------------------------------

    def _effective_idle(self) -> bool:
        return (not self.sensed_busy
                and not self.transmitting
                and not self._response_pending
                and self.engine.now >= self.nav_until)

    def _start_contention(self, fresh_draw: bool) -> None:
        if fresh_draw:
            self.backoff_slots = next_backoff(self.cw, self.rng)
        self.phase = Phase.DEFER
        self._reevaluate()

    def _reevaluate(self) -> None:
        """React to a busy/idle/NAV/responder change; freeze or resume."""
        if self.phase not in _CONTENTION_PHASES or self.phase is Phase.IDLE:
            return
        now = self.engine.now
        if self._effective_idle():
            if self.phase is Phase.DEFER:
                self.phase = Phase.DIFS_WAIT
                self._difs_timer = self.engine.schedule_in(
                    self.timings.difs_ns, EventKind.TIMER, self._on_difs_done)
        else:
            # Timers due exactly now are committed: same-instant energy
            # cannot be sensed, which is how slot-tie collisions arise.
            if self.phase is Phase.DIFS_WAIT:
                if self._difs_timer is not None and self._difs_timer.fire_time > now:
                    self.engine.cancel(self._difs_timer)
                    self._difs_timer = None
                    self.phase = Phase.DEFER
            elif self.phase is Phase.BACKOFF:
                if self._backoff_timer is not None and self._backoff_timer.fire_time > now:
                    self.engine.cancel(self._backoff_timer)
                    self._backoff_timer = None
                    elapsed = now - self._backoff_started
                    self.backoff_slots = max(
                        0, self.backoff_slots - elapsed // self.timings.slot_ns)
                    self.phase = Phase.DEFER
            self._arm_nav_wake()

    def _arm_nav_wake(self) -> None:
        if self.engine.now >= self.nav_until:
            return
        if self._nav_wake is not None and not self._nav_wake.fired \
                and not self._nav_wake.cancelled:
            return
        self._nav_wake = self.engine.schedule(
            self.nav_until, EventKind.TIMER, self._on_nav_wake)

    def _on_nav_wake(self) -> None:
        self._nav_wake = None
        self._reevaluate()

    def _on_difs_done(self) -> None:
        if self.phase is not Phase.DIFS_WAIT:
            raise MacProtocolError(f"{self.name}: DIFS expiry in phase {self.phase}")
        self._difs_timer = None
        self.phase = Phase.BACKOFF
        self._backoff_started = self.engine.now
        if self.backoff_slots == 0:
            self._maybe_transmit_head()
        elif self._effective_idle():
            self._backoff_timer = self.engine.schedule_in(
                self.backoff_slots * self.timings.slot_ns,
                EventKind.BACKOFF, self._on_backoff_done)
        else:
            self.phase = Phase.DEFER
            self._arm_nav_wake()

    def _on_backoff_done(self) -> None:
        if self.phase is not Phase.BACKOFF:
            raise MacProtocolError(f"{self.name}: backoff expiry in phase {self.phase}")
        self._backoff_timer = None
        self.backoff_slots = 0
        self._maybe_transmit_head()

    def _maybe_transmit_head(self) -> None:
        # Committed to the slot boundary unless the MAC itself knows better
        # (it is mid-response, or a decoded frame just set the NAV).
        if self.transmitting or self._response_pending \
                or self.engine.now < self.nav_until:
            self.phase = Phase.DEFER
            self._arm_nav_wake()
            return
        self._transmit_head()

    def _transmit_head(self) -> None:
        if not self.queue:
            raise MacProtocolError(f"{self.name}: transmit with empty queue")
        packet = self.queue[0]
        t = self.timings
        self._current_exchange = self.medium.new_exchange_id()
        if packet.payload_bytes >= t.rts_threshold_bytes:
            frame = Frame(
                kind=FrameKind.RTS, src=self.name, dst=packet.dst,
                duration_us=t.rts_duration_us(packet.payload_bytes),
                airtime_ns=t.rts_airtime_ns,
                exchange_id=self._current_exchange)
            self.phase = Phase.TX_RTS
        else:
            frame = self._make_data_frame(packet)
            self.phase = Phase.TX_DATA
        self.medium.begin_transmission(self, frame)

    def _make_data_frame(self, packet: Packet) -> Frame:
        t = self.timings
        return Frame(
            kind=FrameKind.DATA, src=self.name, dst=packet.dst,
            duration_us=t.data_duration_us(),
            airtime_ns=t.data_airtime_ns(packet.payload_bytes),
            payload_bytes=packet.payload_bytes,
            packet_id=packet.packet_id,
            exchange_id=self._current_exchange)

    # -- own transmissions -------------------------------------------------

    def on_own_tx_end(self, frame: Frame) -> None:
        if frame.kind is FrameKind.RTS:
            if self.phase is not Phase.TX_RTS:
                raise MacProtocolError(f"{self.name}: RTS ended in phase {self.phase}")
            self.phase = Phase.AWAIT_CTS
            self._timeout_timer = self.engine.schedule_in(
                self.timings.cts_timeout_ns, EventKind.TIMER, self._on_timeout)
        elif frame.kind is FrameKind.DATA:
            if self.phase is not Phase.TX_DATA:
                raise MacProtocolError(f"{self.name}: DATA ended in phase {self.phase}")
            self.stats.data_sent += 1
            self.phase = Phase.AWAIT_ACK
            self._timeout_timer = self.engine.schedule_in(
                self.timings.ack_timeout_ns, EventKind.TIMER, self._on_timeout)
        else:  # CTS or ACK response
            self._response_pending = False
            self._response_frame = None
            self._reevaluate()

    def _on_timeout(self) -> None:
        if self.phase not in (Phase.AWAIT_CTS, Phase.AWAIT_ACK):
            raise MacProtocolError(f"{self.name}: timeout in phase {self.phase}")
        self._timeout_timer = None
        self.on_collision()

    def on_collision(self) -> None:
        """CTS/ACK never arrived: exponential backoff, drop past the limit."""
        self.retry_count += 1
        self.stats.retries += 1
        if self.retry_count > self.timings.retry_limit:
            packet = self.queue.popleft()
            self.stats.dropped_retry += 1
            self.cw = self.timings.cw_min
            self.retry_count = 0
            if self.on_packet_dropped is not None:
                self.on_packet_dropped(packet, self.engine.now, "retry-limit")
            if self.queue:
                self._start_contention(fresh_draw=True)
            else:
                self.phase = Phase.IDLE
        else:
            self.cw = bump_cw(self.cw, self.timings.cw_max)
            self._start_contention(fresh_draw=True)

    def _finish_exchange(self) -> None:
        packet = self.queue.popleft()
        self.stats.delivered += 1
        self.cw = self.timings.cw_min
        self.retry_count = 0
        self._current_exchange = None
        if self.on_exchange_complete is not None:
            self.on_exchange_complete(packet, self.engine.now)
        if self.queue:
            self._start_contention(fresh_draw=True)
        else:
            self.phase = Phase.IDLE

    def _send_data_after_sifs(self) -> None:
        packet = self.queue[0]
        frame = self._make_data_frame(packet)
        self.phase = Phase.TX_DATA
        self.medium.begin_transmission(self, frame)

    # -- reception ---------------------------------------------------------

    def on_frame(self, frame: Frame, p_rx_w: float, now: int) -> bool:
        """Handle a decoded frame. Returns True when the MAC processed it
        (addressed to us, or loud enough to count as channel activity)."""
        if frame.dst == self.name:
            self._on_addressed(frame, now)
            if self.on_decoded is not None:
                self.on_decoded(frame, p_rx_w, now)
            return True
        # Frames below the carrier-sense threshold are invisible to the MAC:
        # no NAV, no observation. This is what raising the CST buys.
        if p_rx_w < self.cst_w:
            return False
        self.nav_until = updated_nav(self.nav_until, now, frame, self.name)
        self._arm_nav_wake()
        self._reevaluate()
        if self.on_decoded is not None:
            self.on_decoded(frame, p_rx_w, now)
        return True

    def _on_addressed(self, frame: Frame, now: int) -> None:
        kind = frame.kind
        if kind is FrameKind.RTS:
            # Respond whenever addressed, decoded, and the radio is free; a
            # mid-exchange node stays silent and the sender retries.
            can_respond = (self.phase in _CONTENTION_PHASES
                           and not self.transmitting
                           and not self._response_pending)
            if can_respond:
                t = self.timings
                cts = Frame(
                    kind=FrameKind.CTS, src=self.name, dst=frame.src,
                    duration_us=t.cts_duration_us(frame.duration_us),
                    airtime_ns=t.cts_airtime_ns,
                    exchange_id=frame.exchange_id)
                self._schedule_response(cts)
        elif kind is FrameKind.CTS:
            if self.phase is Phase.AWAIT_CTS \
                    and frame.exchange_id == self._current_exchange:
                self.engine.cancel(self._timeout_timer)
                self._timeout_timer = None
                self.engine.schedule_in(self.timings.sifs_ns, EventKind.TIMER,
                                        self._send_data_after_sifs)
        elif kind is FrameKind.DATA:
            if frame.packet_id is not None \
                    and frame.packet_id not in self._seen_packet_ids:
                self._seen_packet_ids.add(frame.packet_id)
                if self.on_data_received is not None:
                    self.on_data_received(frame, now)
            # ACK duplicates too; the sender needs one either way.
            if not self.transmitting and not self._response_pending:
                ack = Frame(
                    kind=FrameKind.ACK, src=self.name, dst=frame.src,
                    duration_us=0, airtime_ns=self.timings.ack_airtime_ns,
                    exchange_id=frame.exchange_id)
                self._schedule_response(ack)
        elif kind is FrameKind.ACK:
            if self.phase is Phase.AWAIT_ACK \
                    and frame.exchange_id == self._current_exchange:
                self.engine.cancel(self._timeout_timer)
                self._timeout_timer = None
                self._finish_exchange()

    def _schedule_response(self, frame: Frame) -> None:
        self._response_pending = True
        self._response_frame = frame
        self._response_timer = self.engine.schedule_in(
            self.timings.sifs_ns, EventKind.TIMER, self._fire_response)
        self._reevaluate()

    def _fire_response(self) -> None:
        self._response_timer = None
        frame = self._response_frame
        if frame is None:
            raise MacProtocolError(f"{self.name}: response fired with no frame")
        self.medium.begin_transmission(self, frame)
