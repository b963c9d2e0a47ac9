"""QoS accounting for the adaptive station's traffic.

Packets are tracked from MAC enqueue to first decode at the destination
(or to a drop). Each packet is counted in the epoch window where its
outcome resolves, with its true end-to-end delay, so every window's
summary is final the moment the window closes and totals are conserved
across a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .engine import NS_PER_MS, NS_PER_S


class MetricsError(RuntimeError):
    pass


@dataclass
class PacketRecord:
    packet_id: int
    send_ns: int
    payload_bytes: int
    flow: str                      # "uplink" or "downlink"
    recv_ns: Optional[int] = None
    drop_ns: Optional[int] = None
    drop_reason: Optional[str] = None

    @property
    def delay_ms(self) -> float:
        if self.recv_ns is None:
            raise MetricsError(f"packet {self.packet_id} was never received")
        return (self.recv_ns - self.send_ns) / NS_PER_MS


@dataclass(frozen=True)
class QosSummary:
    """One window's throughput / delay / jitter / loss, plus counts."""

    throughput_bps: float
    avg_delay_ms: float
    jitter_ms: float
    loss_rate: float
    sent: int          # packets whose outcome resolved in the window
    received: int
    window_start_ns: int
    window_end_ns: int

    @classmethod
    def empty(cls, start_ns: int, end_ns: int) -> "QosSummary":
        return cls(0.0, 0.0, 0.0, 0.0, 0, 0, start_ns, end_ns)


def summarize(resolved: list[PacketRecord], start_ns: int, end_ns: int) -> QosSummary:
    """Compute the window summary from the packets resolved inside it.

    Received packets contribute payload bits and delay; jitter is the mean
    absolute delay difference between consecutive receptions in arrival
    order; loss is drops over everything resolved.
    """
    if end_ns <= start_ns:
        raise MetricsError("window span must be positive")
    if not resolved:
        return QosSummary.empty(start_ns, end_ns)
    received = [r for r in resolved if r.recv_ns is not None]
    received.sort(key=lambda r: r.recv_ns)
    n = len(resolved)
    n_recv = len(received)
    span_s = (end_ns - start_ns) / NS_PER_S
    bits = 8 * sum(r.payload_bytes for r in received)
    delays = [r.delay_ms for r in received]
    avg_delay = sum(delays) / n_recv if n_recv else 0.0
    if n_recv >= 2:
        jitter = sum(abs(b - a) for a, b in zip(delays, delays[1:])) / (n_recv - 1)
    else:
        jitter = 0.0
    return QosSummary(
        throughput_bps=bits / span_s,
        avg_delay_ms=avg_delay,
        jitter_ms=jitter,
        loss_rate=(n - n_recv) / n,
        sent=n,
        received=n_recv,
        window_start_ns=start_ns,
        window_end_ns=end_ns,
    )


class QosTracker:
    """Live packet ledger feeding per-window summaries.

    record_send / record_receive / record_drop are wired to MAC events;
    close_window drains everything resolved since the previous close.
    """

    def __init__(self):
        self._packets: dict[int, PacketRecord] = {}
        self._pending_resolved: list[PacketRecord] = []
        self.all_records: list[PacketRecord] = []

    def record_send(self, packet_id: int, t_ns: int, payload_bytes: int,
                    flow: str) -> None:
        if packet_id in self._packets:
            raise MetricsError(f"duplicate send for packet {packet_id}")
        rec = PacketRecord(packet_id, t_ns, payload_bytes, flow)
        self._packets[packet_id] = rec
        self.all_records.append(rec)

    def has_packet(self, packet_id: int) -> bool:
        return packet_id in self._packets

    def is_resolved(self, packet_id: int) -> bool:
        rec = self._packets.get(packet_id)
        return rec is not None and (rec.recv_ns is not None
                                    or rec.drop_ns is not None)

    def record_receive(self, packet_id: int, t_ns: int) -> None:
        rec = self._packets.get(packet_id)
        if rec is None:
            raise MetricsError(f"receive without send for packet {packet_id}")
        if rec.recv_ns is not None or rec.drop_ns is not None:
            raise MetricsError(f"packet {packet_id} already resolved")
        if t_ns < rec.send_ns:
            raise MetricsError(f"packet {packet_id} received before send")
        rec.recv_ns = t_ns
        self._pending_resolved.append(rec)

    def record_drop(self, packet_id: int, t_ns: int, reason: str) -> None:
        rec = self._packets.get(packet_id)
        if rec is None:
            raise MetricsError(f"drop without send for packet {packet_id}")
        if rec.recv_ns is not None or rec.drop_ns is not None:
            raise MetricsError(f"packet {packet_id} already resolved")
        rec.drop_ns = t_ns
        rec.drop_reason = reason
        self._pending_resolved.append(rec)

    def close_window(self, start_ns: int, end_ns: int) -> QosSummary:
        resolved = self._pending_resolved
        self._pending_resolved = []
        return summarize(resolved, start_ns, end_ns)
