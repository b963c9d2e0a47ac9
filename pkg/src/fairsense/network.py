"""The shared radio medium and whole-scenario assembly.

The medium owns every in-flight transmission: it draws per-receiver fading
at frame start, keeps each node's sensed power and busy flag current,
ratchets the worst-case interference seen by every in-flight frame, and at
frame end applies the decode gate per receiver and delivers the result.
Simulation ties nodes, traffic, QoS tracking, and fairness observation
together and advances the world one epoch at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import channel as ch
from .config import Scenario
from .engine import EventKind, EventQueue, RngService
from .fairness import DurationTable, FairnessReport, jain_index, process_control_frame, reset_window
from .mac import DcfNode, Frame, FrameKind, MacTimings, Packet
from .metrics import QosSummary, QosTracker
from .traffic import BurstModel, FlowGenerator


@dataclass
class FrameLogRow:
    start_ns: int
    end_ns: int
    kind: str
    src: str
    dst: str
    duration_us: int
    payload_bytes: int
    outcome: str          # "ok" when the addressed receiver decoded it
    observed_ai: bool     # the adaptive station decoded and processed it
    exchange_id: int


class _Transmission:
    __slots__ = ("src", "frame", "start_ns", "end_ns", "rx_power", "max_interf",
                 "doomed")

    def __init__(self, src: DcfNode, frame: Frame, start_ns: int, end_ns: int):
        self.src = src
        self.frame = frame
        self.start_ns = start_ns
        self.end_ns = end_ns
        self.rx_power: dict[str, float] = {}
        self.max_interf: dict[str, float] = {}
        self.doomed: set[str] = set()


class Medium:
    """Broadcast radio coupling all nodes through path loss and fading."""

    def __init__(self, engine: EventQueue, params: ch.ChannelParams,
                 rng_service: RngService, log_frames: bool = False):
        self.engine = engine
        self.params = params
        self.noise_w = params.noise_w
        self._rng_service = rng_service
        self.nodes: list[DcfNode] = []
        self._samplers: dict[str, ch.FadingSampler] = {}
        self._positions: dict[str, ch.Position] = {}
        self._gain: dict[tuple[str, str], float] = {}
        self._active: list[_Transmission] = []
        self._exchange_counter = 0
        self.ai_name: Optional[str] = None
        self.frame_log: Optional[list[FrameLogRow]] = [] if log_frames else None

    def add_node(self, node: DcfNode, position: ch.Position) -> None:
        index = len(self.nodes)
        self.nodes.append(node)
        self._positions[node.name] = position
        self._samplers[node.name] = ch.FadingSampler(
            self.params, self._rng_service.stream("fading", index))
        for other in self.nodes[:-1]:
            d = position.distance_to(self._positions[other.name])
            gain = ch.path_gain(max(d, 1e-9), self.params)
            self._gain[(node.name, other.name)] = gain
            self._gain[(other.name, node.name)] = gain
        node.medium = self
        if node.allow_retune:
            self.ai_name = node.name

    def new_exchange_id(self) -> int:
        self._exchange_counter += 1
        return self._exchange_counter

    def refresh_busy(self, node: DcfNode) -> None:
        """Re-derive the busy flag after a threshold change."""
        busy = ch.carrier_sense_busy(node.sensed_power_w, node.thresholds.cst_dbm)
        if busy != node.sensed_busy:
            node.sensed_busy = busy
            node._reevaluate()

    # -- transmission lifecycle ---------------------------------------------

    def begin_transmission(self, src: DcfNode, frame: Frame) -> None:
        if src.transmitting:
            raise RuntimeError(f"{src.name} is already transmitting")
        now = self.engine.now
        tx = _Transmission(src, frame, now, now + frame.airtime_ns)
        power_dbm = src.thresholds.power_dbm
        tx_w = ch.dbm_to_watt(power_dbm)
        for node in self.nodes:
            if node is src:
                continue
            fading = self._samplers[node.name].draw()
            tx.rx_power[node.name] = (
                tx_w * self._gain[(src.name, node.name)] * fading)
            if node.transmitting:
                tx.doomed.add(node.name)  # half duplex: busy radios miss it
        for other in self._active:
            if src.name in other.rx_power:
                other.doomed.add(src.name)
        self._active.append(tx)
        src.transmitting = True
        self._recompute_levels()
        self.engine.schedule(tx.end_ns, EventKind.FRAME_END,
                             lambda: self._end_transmission(tx))

    def _recompute_levels(self) -> None:
        """Refresh sensed power, interference ratchets, and busy edges."""
        changed: list[DcfNode] = []
        for node in self.nodes:
            name = node.name
            total = math.fsum(tx.rx_power[name] for tx in self._active
                              if tx.src is not node)
            node.sensed_power_w = total
            for tx in self._active:
                if tx.src is node:
                    continue
                interf = total - tx.rx_power[name]
                if interf > tx.max_interf.get(name, 0.0):
                    tx.max_interf[name] = interf
            busy = ch.carrier_sense_busy(total, node.thresholds.cst_dbm)
            if busy != node.sensed_busy:
                node.sensed_busy = busy
                changed.append(node)
        for node in changed:
            node._reevaluate()

    def _end_transmission(self, tx: _Transmission) -> None:
        self._active.remove(tx)
        tx.src.transmitting = False
        self._recompute_levels()
        now = self.engine.now
        tx.src.on_own_tx_end(tx.frame)
        dst_decoded = False
        ai_observed = False
        for node in self.nodes:
            if node is tx.src:
                continue
            name = node.name
            if name in tx.doomed:
                continue
            p_rx = tx.rx_power[name]
            if not ch.decode_gate(p_rx, tx.max_interf.get(name, 0.0),
                                  self.noise_w, node.thresholds.rst_dbm,
                                  self.params.decode_mode,
                                  self.params.capture_sinr_db):
                continue
            processed = node.on_frame(tx.frame, p_rx, now)
            if name == tx.frame.dst:
                dst_decoded = True
            if processed and name == self.ai_name:
                ai_observed = True
        if self.frame_log is not None:
            self.frame_log.append(FrameLogRow(
                start_ns=tx.start_ns, end_ns=tx.end_ns,
                kind=tx.frame.kind.value, src=tx.frame.src, dst=tx.frame.dst,
                duration_us=tx.frame.duration_us,
                payload_bytes=tx.frame.payload_bytes,
                outcome="ok" if dst_decoded else "lost",
                observed_ai=ai_observed,
                exchange_id=tx.frame.exchange_id or 0))


@dataclass
class EpochStats:
    epoch: int
    qos: QosSummary
    fairness: FairnessReport
    duration_snapshot: dict[str, int]
    thresholds: ch.Thresholds


class Simulation:
    """A fully wired scenario instance driven one epoch at a time."""

    def __init__(self, scenario: Scenario, log_frames: Optional[bool] = None):
        self.scenario = scenario
        self.engine = EventQueue()
        self.rng = RngService(scenario.seed)
        params = scenario.channel.to_params()
        log_frames = scenario.trace if log_frames is None else log_frames
        self.medium = Medium(self.engine, params, self.rng,
                             log_frames=log_frames)
        self.timings: MacTimings = scenario.mac.to_timings()
        self.tracker = QosTracker()
        self.nodes: dict[str, DcfNode] = {}
        self.epoch_index = 0
        self._packet_counter = 0
        self.ai_rssi_dbm: list[float] = []   # decoded AP frames, per epoch
        self._build(scenario, params)

    # -- construction --------------------------------------------------------

    def _build(self, scenario: Scenario, params: ch.ChannelParams) -> None:
        radio = scenario.radio
        node_index = 0
        ai_spec = scenario.ai_sta
        for ap in scenario.aps:
            th = ch.Thresholds(cst_dbm=radio.cst_dbm, rst_dbm=radio.rst_dbm,
                               power_dbm=ap.power_dbm if ap.power_dbm is not None
                               else radio.power_dbm)
            node = DcfNode(ap.name, self.engine, self.timings, th,
                           self.rng.stream("mac", node_index), is_ap=True)
            node_index += 1
            self.nodes[ap.name] = node
            self.medium.add_node(node, ch.Position(ap.x, ap.y))
        for sta in scenario.stas:
            th = ch.Thresholds(cst_dbm=radio.cst_dbm, rst_dbm=radio.rst_dbm,
                               power_dbm=sta.power_dbm if sta.power_dbm is not None
                               else radio.power_dbm)
            node = DcfNode(sta.name, self.engine, self.timings, th,
                           self.rng.stream("mac", node_index),
                           is_ap=False, ap_name=sta.ap, allow_retune=sta.ai)
            node_index += 1
            self.nodes[sta.name] = node
            self.medium.add_node(node, ch.Position(sta.x, sta.y))

        self.ai = self.nodes[ai_spec.name]
        self.ai_ap = self.nodes[ai_spec.ap]

        own_bss = [s.name for s in scenario.stas if s.ap == ai_spec.ap]
        self.duration_table = DurationTable.for_bss(ai_spec.ap, own_bss)
        self.duration_snapshots: list[dict[str, int]] = []

        self.ai.on_decoded = self._ai_decoded
        self._wire_tracking()
        self._build_traffic(scenario)

    def _ai_decoded(self, frame: Frame, p_rx_w: float, now: int) -> None:
        if frame.kind in (FrameKind.RTS, FrameKind.CTS):
            process_control_frame(self.duration_table, frame, self.timings)
        if frame.src == self.ai.ap_name \
                and frame.kind in (FrameKind.DATA, FrameKind.ACK):
            self.ai_rssi_dbm.append(ch.watt_to_dbm(p_rx_w))

    def _wire_tracking(self) -> None:
        tracker = self.tracker
        ai_name = self.ai.name
        ap_name = self.ai.ap_name

        def tracked(src: str, dst: str) -> Optional[str]:
            if src == ai_name and dst == ap_name:
                return "uplink"
            if src == ap_name and dst == ai_name:
                return "downlink"
            return None

        for node in self.nodes.values():
            def on_received(frame: Frame, now: int, _node=node) -> None:
                if tracked(frame.src, _node.name) is not None \
                        and tracker.has_packet(frame.packet_id):
                    tracker.record_receive(frame.packet_id, now)
            node.on_data_received = on_received

            def on_dropped(packet: Packet, now: int, reason: str,
                           _node=node) -> None:
                # A sender giving up on a packet the destination already
                # decoded (lost ACK path) is not a loss.
                if packet.flow is not None \
                        and not tracker.is_resolved(packet.packet_id):
                    tracker.record_drop(packet.packet_id, now, reason)
            node.on_packet_dropped = on_dropped

    def _next_packet_id(self) -> int:
        self._packet_counter += 1
        return self._packet_counter

    def _make_sink(self, src: DcfNode, dst: str, flow: Optional[str]):
        tracker = self.tracker

        def sink(payload_bytes: int, now: int) -> None:
            pid = self._next_packet_id()
            packet = Packet(pid, dst, payload_bytes, now, flow)
            if flow is not None:
                tracker.record_send(pid, now, payload_bytes, flow)
            src.enqueue(packet)

        return sink

    def _build_traffic(self, scenario: Scenario) -> None:
        t = scenario.traffic
        flows: list[tuple[str, str, Optional[str], object]] = []
        ai = scenario.ai_sta
        if t.ai_uplink is not None:
            flows.append((ai.name, ai.ap, "uplink", t.ai_uplink))
        if t.ai_downlink is not None:
            flows.append((ai.ap, ai.name, "downlink", t.ai_downlink))
        if t.legacy_downlink is not None:
            for sta in scenario.stas:
                if sta.ap == ai.ap and not sta.ai:
                    flows.append((sta.ap, sta.name, None, t.legacy_downlink))
        if t.obss_downlink is not None:
            scenario_rng = self.rng.stream("scenario")
            for ap in scenario.aps:
                if ap.name == ai.ap:
                    continue
                members = [s for s in scenario.stas if s.ap == ap.name]
                if not members:
                    continue
                pick = members[int(scenario_rng.integers(len(members)))]
                flows.append((ap.name, pick.name, None, t.obss_downlink))

        self.flows: list[FlowGenerator] = []
        for i, (src, dst, flow_tag, model_cfg) in enumerate(flows):
            model = BurstModel.from_rate(
                rate_hz=model_cfg.rate_hz, bytes_mean=model_cfg.bytes_mean,
                bytes_jitter=model_cfg.bytes_jitter, mtu=model_cfg.mtu,
                start_offset_ns=round(model_cfg.start_offset_ms * 1e6) + i * 1000)
            gen = FlowGenerator(self.engine, model,
                                self.rng.stream("traffic", i),
                                self._make_sink(self.nodes[src], dst, flow_tag))
            self.flows.append(gen)
            gen.start()

    # -- control ---------------------------------------------------------------

    def set_ai_thresholds(self, thresholds: ch.Thresholds) -> None:
        thresholds.validate_within(self.scenario.radio.bounds())
        self.ai.set_thresholds(thresholds)

    def drain_ai_rssi(self) -> list[float]:
        out = self.ai_rssi_dbm
        self.ai_rssi_dbm = []
        return out

    # -- epoch loop --------------------------------------------------------------

    def advance_epoch(self) -> EpochStats:
        start = self.epoch_index * self.scenario.epoch_ns
        end = start + self.scenario.epoch_ns
        self.engine.run_until(end)
        summary = self.tracker.close_window(start, end)
        report = jain_index(self.duration_table)
        snapshot = dict(self.duration_table.entries)
        self.duration_snapshots.append(snapshot)
        reset_window(self.duration_table, end)
        stats = EpochStats(epoch=self.epoch_index, qos=summary,
                           fairness=report, duration_snapshot=snapshot,
                           thresholds=self.ai.thresholds)
        self.epoch_index += 1
        return stats
