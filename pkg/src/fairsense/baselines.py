"""Non-learning controllers: the static default radio and dynamic
sensitivity control (DSC).

DSC follows the classic rule: carrier-sense threshold = smoothed RSSI of
frames heard from the associated AP minus a protection margin, clamped to
the configured range. Sensitivity and power stay at their defaults.
"""

from __future__ import annotations

from typing import Optional

from .config import DscConfig, Scenario
from .rlenv import ActionPoint


def dsc_update(smoothed_rssi_dbm: float, margin_db: float,
               cst_bounds: tuple[float, float]) -> float:
    """CST at margin below the smoothed AP signal, clamped into range."""
    lo, hi = cst_bounds
    return min(hi, max(lo, smoothed_rssi_dbm - margin_db))


class StaticController:
    """Always the configured defaults; the legacy comparison point."""

    def __init__(self, scenario: Scenario):
        radio = scenario.radio
        self._point = ActionPoint(cst_dbm=radio.cst_dbm, rst_dbm=radio.rst_dbm,
                                  power_dbm=radio.power_dbm)

    def decide(self, rssi_samples_dbm: list[float]) -> ActionPoint:
        return self._point


class DscController:
    """Tracks AP RSSI with an exponential average and re-derives the CST
    every update period; holds the previous value when nothing was heard."""

    def __init__(self, scenario: Scenario):
        self.config: DscConfig = scenario.dsc
        radio = scenario.radio
        self._cst_bounds = radio.cst_range_dbm
        self._rst = radio.rst_dbm
        self._power = radio.power_dbm
        self._cst = radio.cst_dbm
        self._smoothed: Optional[float] = None
        self._epochs_seen = 0

    def decide(self, rssi_samples_dbm: list[float]) -> ActionPoint:
        self._epochs_seen += 1
        if rssi_samples_dbm:
            epoch_mean = sum(rssi_samples_dbm) / len(rssi_samples_dbm)
            if self._smoothed is None:
                self._smoothed = epoch_mean
            else:
                c = self.config.smoothing
                self._smoothed = (1.0 - c) * self._smoothed + c * epoch_mean
        due = self._epochs_seen % self.config.update_period == 0
        if due and self._smoothed is not None:
            self._cst = dsc_update(self._smoothed, self.config.margin_db,
                                   self._cst_bounds)
        return ActionPoint(cst_dbm=self._cst, rst_dbm=self._rst,
                           power_dbm=self._power)


def make_controller(scenario: Scenario):
    if scenario.controller == "static":
        return StaticController(scenario)
    if scenario.controller == "dsc":
        return DscController(scenario)
    raise ValueError(f"no baseline controller named {scenario.controller!r}")
