"""Scenario configuration: schema, defaults, validation, (de)serialization.

Config files are YAML trees with unit-suffixed keys. Every omitted field
falls back to the default deployment: 5 APs / 14 stations, path-loss
exponent 3, -100 dBm noise, radio defaults 16 dBm power in [10, 30],
RST -101 in [-110, -30], CST -82 in [-100, -20], QoS floors 1.5 Mb/s,
5 ms delay, 2 ms jitter, 0.1% loss.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .channel import ChannelParams, ThresholdBounds, Thresholds
from .engine import NS_PER_MS
from .mac import MacTimings

CONTROLLERS = ("dqn", "dsc", "static")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    alpha: float = 3.0
    d0_m: float = 1.0
    noise_dbm: float = -100.0
    nakagami_m: float = 1.0
    shadowing_sigma_db: float = 0.0
    fading: bool = True
    decode_mode: str = "power"
    capture_sinr_db: float = 10.0

    def to_params(self) -> ChannelParams:
        return ChannelParams(
            alpha=self.alpha, d0_m=self.d0_m, noise_dbm=self.noise_dbm,
            nakagami_m=self.nakagami_m,
            shadowing_sigma_db=self.shadowing_sigma_db,
            fading_enabled=self.fading, decode_mode=self.decode_mode,
            capture_sinr_db=self.capture_sinr_db)


@dataclass(frozen=True)
class MacConfig:
    slot_us: int = 9
    sifs_us: int = 16
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7
    rts_threshold_bytes: int = 0
    queue_limit: int = 1000
    data_rate_mbps: float = 24.0
    control_rate_mbps: float = 24.0
    preamble_us: int = 20

    def to_timings(self) -> MacTimings:
        return MacTimings(
            slot_ns=self.slot_us * 1000, sifs_ns=self.sifs_us * 1000,
            cw_min=self.cw_min, cw_max=self.cw_max,
            retry_limit=self.retry_limit,
            rts_threshold_bytes=self.rts_threshold_bytes,
            queue_limit=self.queue_limit,
            data_rate_mbps=self.data_rate_mbps,
            control_rate_mbps=self.control_rate_mbps,
            preamble_ns=self.preamble_us * 1000)


@dataclass(frozen=True)
class RadioConfig:
    power_dbm: float = 16.0
    power_range_dbm: tuple[float, float] = (10.0, 30.0)
    rst_dbm: float = -101.0
    rst_range_dbm: tuple[float, float] = (-110.0, -30.0)
    cst_dbm: float = -82.0
    cst_range_dbm: tuple[float, float] = (-100.0, -20.0)

    def defaults(self) -> Thresholds:
        return Thresholds(cst_dbm=self.cst_dbm, rst_dbm=self.rst_dbm,
                          power_dbm=self.power_dbm)

    def bounds(self) -> ThresholdBounds:
        return ThresholdBounds(cst=self.cst_range_dbm, rst=self.rst_range_dbm,
                               power=self.power_range_dbm)


@dataclass(frozen=True)
class QosConfig:
    throughput_min_mbps: float = 1.5
    delay_max_ms: float = 5.0
    jitter_max_ms: float = 2.0
    loss_max: float = 0.001    # fraction, i.e. 0.1%


@dataclass(frozen=True)
class RewardWeightsConfig:
    throughput: float = 1.0
    delay: float = 10.0
    jitter: float = 10.0
    loss: float = 0.1


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.8
    lr: float = 0.001
    epsilon: float = 0.1
    batch: int = 32
    buffer: int = 5000
    sync_period: int = 100
    hidden: tuple[int, ...] = (64, 64)
    grad_clip: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("discount must be in [0, 1)")
        if self.batch > self.buffer:
            raise ConfigError("batch size cannot exceed buffer capacity")
        if self.sync_period < 1:
            raise ConfigError("target sync period must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("exploration probability must be in [0, 1]")


@dataclass(frozen=True)
class DscConfig:
    margin_db: float = 25.0
    smoothing: float = 0.1
    update_period: int = 1

    def __post_init__(self):
        if self.margin_db <= 0:
            raise ConfigError("DSC margin must be positive")
        if not 0.0 < self.smoothing <= 1.0:
            raise ConfigError("DSC smoothing coefficient must be in (0, 1]")
        if self.update_period < 1:
            raise ConfigError("DSC update period must be >= 1")


@dataclass(frozen=True)
class ApSpec:
    name: str
    x: float
    y: float
    power_dbm: Optional[float] = None   # overrides radio default


@dataclass(frozen=True)
class StaSpec:
    name: str
    x: float
    y: float
    ap: str
    ai: bool = False
    power_dbm: Optional[float] = None


@dataclass(frozen=True)
class FlowModelConfig:
    rate_hz: float
    bytes_mean: int
    bytes_jitter: int = 0
    mtu: int = 1500
    start_offset_ms: float = 0.0


@dataclass(frozen=True)
class TrafficConfig:
    ai_uplink: Optional[FlowModelConfig] = FlowModelConfig(60.0, 3000, 300)
    ai_downlink: Optional[FlowModelConfig] = FlowModelConfig(60.0, 8000, 800)
    legacy_downlink: Optional[FlowModelConfig] = FlowModelConfig(60.0, 8000, 800)
    obss_downlink: Optional[FlowModelConfig] = FlowModelConfig(60.0, 8000, 800)


# The default deployment: one home BSS with the adaptive station plus three
# legacy stations near the AP at the origin, and four neighbouring BSSs
# 20-40 m away, 14 stations in total.
DEFAULT_APS = (
    ApSpec("AP1", 0.0, 0.0),
    ApSpec("AP2", 25.0, 0.0),
    ApSpec("AP3", -25.0, 5.0),
    ApSpec("AP4", 0.0, 30.0),
    ApSpec("AP5", 20.0, -25.0),
)

DEFAULT_STAS = (
    StaSpec("STA_AI", 5.0, 0.0, "AP1", ai=True),
    StaSpec("STA2", -3.0, 2.0, "AP1"),
    StaSpec("STA3", 2.0, -4.0, "AP1"),
    StaSpec("STA4", -2.0, -3.0, "AP1"),
    StaSpec("STA5", 27.0, 2.0, "AP2"),
    StaSpec("STA6", 23.0, -2.0, "AP2"),
    StaSpec("STA7", 28.0, -1.0, "AP2"),
    StaSpec("STA8", -27.0, 6.0, "AP3"),
    StaSpec("STA9", -23.0, 4.0, "AP3"),
    StaSpec("STA10", -26.0, 8.0, "AP3"),
    StaSpec("STA11", 2.0, 31.0, "AP4"),
    StaSpec("STA12", -2.0, 29.0, "AP4"),
    StaSpec("STA13", 22.0, -26.0, "AP5"),
    StaSpec("STA14", 18.0, -24.0, "AP5"),
)


@dataclass(frozen=True)
class Scenario:
    seed: int = 1
    epochs: int = 500
    epoch_ms: int = 100
    controller: str = "static"
    final_k: int = 100              # tail window for run summaries
    trace: bool = False             # write frames.csv / packets.csv
    channel: ChannelConfig = ChannelConfig()
    mac: MacConfig = MacConfig()
    radio: RadioConfig = RadioConfig()
    qos: QosConfig = QosConfig()
    reward_weights: RewardWeightsConfig = RewardWeightsConfig()
    lattice_l: int = 1
    agent: AgentConfig = AgentConfig()
    dsc: DscConfig = DscConfig()
    aps: tuple[ApSpec, ...] = DEFAULT_APS
    stas: tuple[StaSpec, ...] = DEFAULT_STAS
    traffic: TrafficConfig = TrafficConfig()

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}; "
                              f"expected one of {CONTROLLERS}")
        if self.epochs < 1 or self.epoch_ms < 1:
            raise ConfigError("epochs and epoch_ms must be positive")
        if self.lattice_l < 1:
            raise ConfigError("lattice granularity must be >= 1")
        ap_names = [ap.name for ap in self.aps]
        if len(set(ap_names)) != len(ap_names) or not ap_names:
            raise ConfigError("AP names must be unique and non-empty")
        sta_names = [s.name for s in self.stas]
        if len(set(sta_names)) != len(sta_names) or not sta_names:
            raise ConfigError("station names must be unique and non-empty")
        if set(ap_names) & set(sta_names):
            raise ConfigError("AP and station names must not overlap")
        for sta in self.stas:
            if sta.ap not in ap_names:
                raise ConfigError(f"station {sta.name} associated with "
                                  f"unknown AP {sta.ap!r}")
        ai = [s for s in self.stas if s.ai]
        if len(ai) != 1:
            raise ConfigError(f"exactly one adaptive station required, "
                              f"found {len(ai)}")
        bounds = self.radio.bounds()
        self.radio.defaults().validate_within(bounds)
        # channel invariants checked by ChannelParams itself
        self.channel.to_params()

    @property
    def epoch_ns(self) -> int:
        return self.epoch_ms * NS_PER_MS

    @property
    def ai_sta(self) -> StaSpec:
        return next(s for s in self.stas if s.ai)


def _coerce(value: Any, typ: Any, path: str) -> Any:
    """Build nested config dataclasses / tuples from plain YAML values."""
    origin = getattr(typ, "__origin__", None)
    if typ is Any:
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        args = typ.__args__
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]")
                         for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} items")
        return tuple(_coerce(v, t, f"{path}[{i}]")
                     for i, (v, t) in enumerate(zip(value, args)))
    if origin is not None and str(origin).endswith("Union"):  # Optional[...]
        if value is None:
            return None
        inner = [a for a in typ.__args__ if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(typ):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _from_dict(typ, value, path)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported config field type {typ}")


def _from_dict(cls, data: dict, path: str = "") -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path or cls.__name__}: unknown keys "
                          f"{sorted(unknown)}; known keys are {sorted(fields)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        kwargs[name] = _coerce(value, _resolve_type(cls, f),
                               f"{path}.{name}" if path else name)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def _resolve_type(cls, f: dataclasses.Field) -> Any:
    hints = getattr(cls, "__cached_hints__", None)
    if hints is None:
        import typing
        hints = typing.get_type_hints(cls)
        cls.__cached_hints__ = hints
    return hints[f.name]


def scenario_from_dict(data: dict) -> Scenario:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("scenario root must be a mapping")
    return _from_dict(Scenario, data, "scenario")


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; an empty file is the default
    deployment."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return scenario_from_dict(data)


def _to_plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_plain(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def scenario_to_dict(scenario: Scenario) -> dict:
    return _to_plain(scenario)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(scenario_to_dict(scenario), sort_keys=True))
