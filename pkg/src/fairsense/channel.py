"""Radio propagation and reception gates.

dBm/watt conversion, distance attenuation, Nakagami-m power fading,
interference aggregation, SINR, the carrier-sense busy test, and the
frame-decode gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DECODE_POWER = "power"
DECODE_SINR = "sinr"
DECODE_MODES = (DECODE_POWER, DECODE_SINR)


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watt_to_dbm(p_w: float) -> float:
    if p_w <= 0.0:
        raise ValueError(f"power must be positive to express in dBm, got {p_w}")
    return 10.0 * math.log10(p_w * 1e3)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants shared by every link in a scenario."""

    alpha: float = 3.0              # path-loss exponent
    d0_m: float = 1.0               # reference distance
    noise_dbm: float = -100.0       # additive noise floor
    nakagami_m: float = 1.0         # fading shape; 1 is Rayleigh-like
    shadowing_sigma_db: float = 0.0  # log-normal shadowing, 0 disables
    fading_enabled: bool = True
    decode_mode: str = DECODE_POWER
    capture_sinr_db: float = 10.0   # SINR needed on top of the power gate

    def __post_init__(self):
        if not 2.0 <= self.alpha <= 4.0:
            raise ValueError(f"path-loss exponent {self.alpha} outside [2, 4]")
        if self.d0_m <= 0:
            raise ValueError("reference distance must be positive")
        if not 1.0 <= self.nakagami_m <= 2.0:
            raise ValueError(f"Nakagami shape {self.nakagami_m} outside [1, 2]")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")
        if self.decode_mode not in DECODE_MODES:
            raise ValueError(f"unknown decode mode {self.decode_mode!r}")

    @property
    def noise_w(self) -> float:
        return dbm_to_watt(self.noise_dbm)


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("positions must be finite")

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Thresholds:
    """The tunable radio triple: carrier-sense, receive-sensitivity, power."""

    cst_dbm: float
    rst_dbm: float
    power_dbm: float

    def validate_within(self, bounds: "ThresholdBounds") -> None:
        for value, (lo, hi), name in (
            (self.cst_dbm, bounds.cst, "cst_dbm"),
            (self.rst_dbm, bounds.rst, "rst_dbm"),
            (self.power_dbm, bounds.power, "power_dbm"),
        ):
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside configured range [{lo}, {hi}]")


@dataclass(frozen=True)
class ThresholdBounds:
    cst: tuple[float, float]
    rst: tuple[float, float]
    power: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.cst, self.rst, self.power):
            if lo > hi:
                raise ValueError(f"range [{lo}, {hi}] is inverted")


@dataclass(frozen=True)
class LinkSample:
    """One realized link draw; rx power is exactly the three-factor product."""

    tx_power_dbm: float
    path_gain: float
    fading_gain: float

    @property
    def rx_power_w(self) -> float:
        return dbm_to_watt(self.tx_power_dbm) * self.path_gain * self.fading_gain


def path_gain(d_m: float, params: ChannelParams) -> float:
    """Deterministic attenuation (d/d0)^-alpha, clamped to 1 below d0."""
    if d_m <= 0:
        raise ValueError(f"distance must be positive, got {d_m}")
    if d_m <= params.d0_m:
        return 1.0
    return (d_m / params.d0_m) ** (-params.alpha)


def sample_fading(m_shape: float, rng: np.random.Generator) -> float:
    """Unit-mean power gain |h|^2 ~ Gamma(shape=m, rate=m); variance 1/m."""
    if m_shape < 0.5:
        raise ValueError(f"fading shape must be >= 0.5, got {m_shape}")
    return float(rng.gamma(m_shape, 1.0 / m_shape))


def sample_shadowing(sigma_db: float, rng: np.random.Generator) -> float:
    """Log-normal shadowing as a linear gain factor; sigma 0 means off."""
    if sigma_db <= 0:
        return 1.0
    return 10.0 ** (rng.normal(0.0, sigma_db) / 10.0)


class FadingSampler:
    """Per-receiver fading stream with batched draws (hot path)."""

    def __init__(self, params: ChannelParams, rng: np.random.Generator, batch: int = 4096):
        self._params = params
        self._rng = rng
        self._batch = batch
        self._buf: np.ndarray = np.empty(0)
        self._idx = 0

    def draw(self) -> float:
        if not self._params.fading_enabled:
            return 1.0
        if self._idx >= len(self._buf):
            m = self._params.nakagami_m
            self._buf = self._rng.gamma(m, 1.0 / m, size=self._batch)
            self._idx = 0
        value = float(self._buf[self._idx])
        self._idx += 1
        if self._params.shadowing_sigma_db > 0:
            value *= sample_shadowing(self._params.shadowing_sigma_db, self._rng)
        return value


def received_power(tx_power_dbm: float, d_m: float, fading_gain: float,
                   params: ChannelParams) -> float:
    """Rx power in watts: tx_watts * path_gain * |h|^2."""
    if fading_gain <= 0:
        raise ValueError("fading gain must be positive")
    return dbm_to_watt(tx_power_dbm) * path_gain(d_m, params) * fading_gain


def aggregate_interference(active: list[tuple[float, float, float]],
                           params: ChannelParams) -> float:
    """Sum of rx powers from (tx_power_dbm, distance_m, fading) transmitters.

    The intended transmitter must not be in the list; an empty list is a
    quiet channel (0 W). fsum keeps the total order-independent.
    """
    if not active:
        return 0.0
    return math.fsum(
        received_power(p_dbm, d_m, fading, params) for p_dbm, d_m, fading in active
    )


def sinr(p_rx_w: float, interference_w: float, noise_w: float) -> float:
    if p_rx_w < 0 or interference_w < 0:
        raise ValueError("powers must be non-negative")
    if noise_w <= 0:
        raise ValueError("noise power must be positive")
    return p_rx_w / (interference_w + noise_w)


def carrier_sense_busy(i_total_w: float, cst_dbm: float) -> bool:
    """Busy when total sensed power reaches the carrier-sense threshold."""
    return i_total_w >= dbm_to_watt(cst_dbm)


def decode_gate(p_rx_w: float, interference_w: float, noise_w: float,
                rst_dbm: float, mode: str = DECODE_POWER,
                capture_sinr_db: float = 10.0) -> bool:
    """Whether a frame at p_rx is decodable against interference + noise.

    power mode: rx power must reach the sensitivity threshold and the SINR
    must clear the capture margin. sinr mode: the threshold is read as a dB
    ratio and compared against the SINR alone.
    """
    gamma = sinr(p_rx_w, interference_w, noise_w)
    if mode == DECODE_POWER:
        return p_rx_w >= dbm_to_watt(rst_dbm) and gamma >= db_to_linear(capture_sinr_db)
    if mode == DECODE_SINR:
        return gamma >= db_to_linear(rst_dbm)
    raise ValueError(f"unknown decode mode {mode!r}")
