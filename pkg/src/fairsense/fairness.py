"""Station-side airtime fairness.

The adaptive station cannot see the AP's global traffic accounting, so it
infers per-station channel time from the control frames its AP transmits:
an RTS reserves its duration for the addressed station, and a CTS grants
the remainder of an uplink exchange (plus the CTS airtime and SIFS that
already elapsed, so both observation paths credit the same total). Jain's
index over the accumulated durations is the fairness score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mac import Frame, FrameKind, MacTimings


@dataclass
class DurationTable:
    """Per-station accumulated channel time in whole microseconds.

    Keys are the station addresses of the observer's own BSS (the observer
    included), fixed at window start. `ap_addr` scopes updates to control
    frames the associated AP transmitted. Exchange ids already credited are
    remembered so one reservation is never counted through both its RTS and
    its CTS.
    """

    ap_addr: str
    entries: dict[str, int]
    window_start: int = 0
    seen_exchanges: set[int] = field(default_factory=set)

    @classmethod
    def for_bss(cls, ap_addr: str, station_addrs: list[str]) -> "DurationTable":
        return cls(ap_addr=ap_addr, entries={addr: 0 for addr in station_addrs})


@dataclass(frozen=True)
class FairnessReport:
    f: float
    n: int
    per_station_share: tuple[float, ...]


def process_control_frame(table: DurationTable, frame: Frame,
                          timings: MacTimings) -> DurationTable:
    """Credit one overheard RTS or CTS to its receive-address station.

    Frames not sent by the associated AP, keyed to unknown addresses, or
    belonging to an exchange already credited leave the table unchanged.
    Mutates and returns `table`.
    """
    if frame.kind not in (FrameKind.RTS, FrameKind.CTS):
        raise ValueError(f"not a control frame: {frame.kind}")
    if frame.src != table.ap_addr:
        return table
    if frame.dst not in table.entries:
        return table
    if frame.exchange_id is not None:
        if frame.exchange_id in table.seen_exchanges:
            return table
        table.seen_exchanges.add(frame.exchange_id)
    if frame.kind is FrameKind.RTS:
        table.entries[frame.dst] += frame.duration_us
    else:
        table.entries[frame.dst] += (timings.cts_airtime_us + timings.sifs_us
                                     + frame.duration_us)
    return table


def jain_index(table: DurationTable) -> FairnessReport:
    """Jain's fairness over the table: (sum T)^2 / (n * sum T^2).

    A silent window (all zeros) is vacuously fair and reports 1.0.
    """
    durations = list(table.entries.values())
    n = len(durations)
    if n == 0:
        raise ValueError("fairness is undefined for an empty table")
    total = float(sum(durations))
    if total <= 0.0:
        return FairnessReport(f=1.0, n=n, per_station_share=(0.0,) * n)
    sq = float(sum(d * d for d in durations))
    f = (total * total) / (n * sq)
    shares = tuple(d / total for d in durations)
    return FairnessReport(f=f, n=n, per_station_share=shares)


def reset_window(table: DurationTable, now: int) -> DurationTable:
    """Zero all durations for a new observation window; keys are retained."""
    for key in table.entries:
        table.entries[key] = 0
    table.window_start = now
    # Exchanges already credited stay remembered briefly so a reservation
    # straddling the boundary is not double counted; the set only grows
    # within a run of windows, so prune everything not seen again.
    if len(table.seen_exchanges) > 100_000:
        table.seen_exchanges.clear()
    return table
