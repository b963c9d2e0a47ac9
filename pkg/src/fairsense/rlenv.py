"""The decision process around the simulator.

State is the epoch's fairness index plus QoS metrics normalized by their
targets; actions are points on a (l+1)^3 lattice over the carrier-sense
threshold, receive-sensitivity threshold, and transmit power ranges; the
reward is fairness minus weighted penalties for every violated QoS target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ThresholdBounds, Thresholds
from .config import Scenario
from .fairness import FairnessReport
from .metrics import QosSummary
from .network import EpochStats, Simulation

STATE_DIM = 5
STATE_CLIP = 10.0


@dataclass(frozen=True)
class ActionPoint:
    cst_dbm: float
    rst_dbm: float
    power_dbm: float

    def as_thresholds(self) -> Thresholds:
        return Thresholds(cst_dbm=self.cst_dbm, rst_dbm=self.rst_dbm,
                          power_dbm=self.power_dbm)


@dataclass(frozen=True)
class QosTargets:
    s_min_mbps: float
    d_max_ms: float
    j_max_ms: float
    ploss_max: float   # fraction

    def __post_init__(self):
        if min(self.s_min_mbps, self.d_max_ms, self.j_max_ms,
               self.ploss_max) <= 0:
            raise ValueError("QoS targets must be positive")

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "QosTargets":
        q = scenario.qos
        return cls(q.throughput_min_mbps, q.delay_max_ms, q.jitter_max_ms,
                   q.loss_max)


@dataclass(frozen=True)
class RewardWeights:
    w_s: float
    w_d: float
    w_j: float
    w_ploss: float

    def __post_init__(self):
        if min(self.w_s, self.w_d, self.w_j, self.w_ploss) < 0:
            raise ValueError("penalty weights must be non-negative")

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "RewardWeights":
        w = scenario.reward_weights
        return cls(w.throughput, w.delay, w.jitter, w.loss)


@dataclass(frozen=True)
class PenaltyTerms:
    """Constraint violations in their native units (Mb/s, ms, ms, percent)."""

    zeta_s: float
    zeta_d: float
    zeta_j: float
    zeta_ploss: float

    def weighted_total(self, w: RewardWeights) -> float:
        return (w.w_s * self.zeta_s + w.w_d * self.zeta_d
                + w.w_j * self.zeta_j + w.w_ploss * self.zeta_ploss)


def _lattice_axis(lo: float, hi: float, l: int) -> list[float]:
    if lo == hi:
        return [lo]
    step = (hi - lo) / l
    return [lo + i * step for i in range(l + 1)]


def action_lattice(bounds: ThresholdBounds, l: int) -> list[ActionPoint]:
    """All (l+1)^3 lattice points in lexicographic (cst, rst, power) order."""
    if l < 1:
        raise ValueError("lattice granularity must be >= 1")
    points = [
        ActionPoint(cst, rst, power)
        for cst in _lattice_axis(*bounds.cst, l)
        for rst in _lattice_axis(*bounds.rst, l)
        for power in _lattice_axis(*bounds.power, l)
    ]
    return points


def compute_reward(summary: QosSummary, fairness: FairnessReport,
                   targets: QosTargets,
                   weights: RewardWeights) -> tuple[float, PenaltyTerms]:
    """Fairness minus weighted shortfall/excess on each QoS constraint.

    Each penalty is zero exactly when its constraint holds, so the reward
    equals the fairness index precisely on the feasible set.
    """
    s_mbps = summary.throughput_bps / 1e6
    terms = PenaltyTerms(
        zeta_s=max(0.0, targets.s_min_mbps - s_mbps),
        zeta_d=max(0.0, summary.avg_delay_ms - targets.d_max_ms),
        zeta_j=max(0.0, summary.jitter_ms - targets.j_max_ms),
        zeta_ploss=max(0.0, (summary.loss_rate - targets.ploss_max) * 100.0),
    )
    return fairness.f - terms.weighted_total(weights), terms


def build_state(summary: QosSummary, fairness: FairnessReport,
                targets: QosTargets) -> np.ndarray:
    """(F, S/S_min, D/D_max, J/J_max, p/p_max), ratios clipped to [0, 10]."""

    def norm(value: float, target: float) -> float:
        return float(np.clip(value / target, 0.0, STATE_CLIP))

    return np.array([
        fairness.f,
        norm(summary.throughput_bps / 1e6, targets.s_min_mbps),
        norm(summary.avg_delay_ms, targets.d_max_ms),
        norm(summary.jitter_ms, targets.j_max_ms),
        norm(summary.loss_rate, targets.ploss_max),
    ], dtype=np.float64)


@dataclass
class EpochDiag:
    """Everything one epoch produced, for CSV rows and analysis."""

    epoch: int
    state: np.ndarray
    reward: float
    penalties: PenaltyTerms
    qos: QosSummary
    fairness: FairnessReport
    thresholds: Thresholds
    action_index: Optional[int] = None


class WifiEnv:
    """Continuing-task environment: one step = one decision epoch.

    There is no terminal state; callers run as many steps as they want and
    the TD backup always bootstraps.
    """

    def __init__(self, scenario: Scenario, log_frames: Optional[bool] = None):
        self.scenario = scenario
        self.targets = QosTargets.from_scenario(scenario)
        self.weights = RewardWeights.from_scenario(scenario)
        self.lattice = action_lattice(scenario.radio.bounds(), scenario.lattice_l)
        self._index_of = {p: i for i, p in enumerate(self.lattice)}
        self.sim: Optional[Simulation] = None
        self._log_frames = log_frames

    @property
    def action_count(self) -> int:
        return len(self.lattice)

    def reset(self) -> np.ndarray:
        """(Re)build the simulation; the initial state is a silent epoch."""
        self.sim = Simulation(self.scenario, log_frames=self._log_frames)
        return np.array([1.0, 0.0, 0.0, 0.0, 0.0], dtype=np.float64)

    def apply_action(self, point: ActionPoint) -> None:
        """Retune the adaptive station; the point must be on the lattice."""
        if point not in self._index_of:
            raise ValueError(f"action {point} is not on the lattice")
        self.sim.set_ai_thresholds(point.as_thresholds())

    def step(self, action_index: int) -> tuple[np.ndarray, float, EpochDiag]:
        if self.sim is None:
            raise RuntimeError("call reset() before step()")
        if not 0 <= action_index < len(self.lattice):
            raise ValueError(f"action index {action_index} out of range")
        self.apply_action(self.lattice[action_index])
        stats: EpochStats = self.sim.advance_epoch()
        reward, penalties = compute_reward(stats.qos, stats.fairness,
                                           self.targets, self.weights)
        state = build_state(stats.qos, stats.fairness, self.targets)
        diag = EpochDiag(epoch=stats.epoch, state=state, reward=reward,
                         penalties=penalties, qos=stats.qos,
                         fairness=stats.fairness, thresholds=stats.thresholds,
                         action_index=action_index)
        return state, reward, diag
