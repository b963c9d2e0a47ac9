import numpy as np
import pytest

from conftest import tiny_traffic_scenario, two_node_scenario
from fairsense.channel import ThresholdBounds
from fairsense.fairness import FairnessReport
from fairsense.metrics import QosSummary
from fairsense.rlenv import (ActionPoint, QosTargets, RewardWeights, WifiEnv,
                             action_lattice, build_state, compute_reward)

BOUNDS = ThresholdBounds(cst=(-100.0, -20.0), rst=(-110.0, -30.0),
                         power=(10.0, 30.0))
TARGETS = QosTargets(s_min_mbps=1.5, d_max_ms=5.0, j_max_ms=2.0,
                     ploss_max=0.001)
WEIGHTS = RewardWeights(w_s=1.0, w_d=10.0, w_j=10.0, w_ploss=0.1)


def summary(throughput_mbps=2.0, delay_ms=3.0, jitter_ms=1.0, loss=0.0,
            sent=100):
    received = round(sent * (1 - loss))
    return QosSummary(throughput_bps=throughput_mbps * 1e6,
                      avg_delay_ms=delay_ms, jitter_ms=jitter_ms,
                      loss_rate=loss, sent=sent, received=received,
                      window_start_ns=0, window_end_ns=100_000_000)


def fairness(f=0.9, n=3):
    return FairnessReport(f=f, n=n, per_station_share=(1.0 / n,) * n)


# -- lattice ---------------------------------------------------------------------

def test_lattice_l1_has_exact_corner_actions():
    points = action_lattice(BOUNDS, 1)
    assert len(points) == 8
    expect = [ActionPoint(c, r, p)
              for c in (-100.0, -20.0)
              for r in (-110.0, -30.0)
              for p in (10.0, 30.0)]
    assert points == expect


def test_lattice_l2_midpoints():
    bounds = ThresholdBounds(cst=(0.0, 10.0), rst=(0.0, 10.0),
                             power=(0.0, 10.0))
    points = action_lattice(bounds, 2)
    assert len(points) == 27
    cst_values = sorted({p.cst_dbm for p in points})
    assert cst_values == [0.0, 5.0, 10.0]


def test_lattice_index_roundtrip():
    points = action_lattice(BOUNDS, 3)
    index_of = {p: i for i, p in enumerate(points)}
    for i, p in enumerate(points):
        assert index_of[p] == i
    assert len(points) == 64


def test_lattice_degenerate_axis_collapses():
    bounds = ThresholdBounds(cst=(-50.0, -50.0), rst=(-110.0, -30.0),
                             power=(10.0, 30.0))
    points = action_lattice(bounds, 1)
    assert len(points) == 4
    assert {p.cst_dbm for p in points} == {-50.0}


def test_lattice_points_within_bounds():
    for l in (1, 2, 5):
        for p in action_lattice(BOUNDS, l):
            p.as_thresholds().validate_within(BOUNDS)


def test_lattice_rejects_degenerate_granularity():
    with pytest.raises(ValueError):
        action_lattice(BOUNDS, 0)


# -- reward ---------------------------------------------------------------------

def test_reward_feasible_point_is_fairness():
    reward, z = compute_reward(summary(), fairness(0.9), TARGETS, WEIGHTS)
    assert reward == pytest.approx(0.9, abs=1e-15)
    assert (z.zeta_s, z.zeta_d, z.zeta_j, z.zeta_ploss) == (0, 0, 0, 0)


def test_reward_delay_violation_hand_case():
    # 7 ms against a 5 ms cap with weight 10: reward = 0.9 - 20
    reward, z = compute_reward(summary(delay_ms=7.0), fairness(0.9),
                               TARGETS, WEIGHTS)
    assert z.zeta_d == pytest.approx(2.0, abs=1e-12)
    assert reward == pytest.approx(0.9 - 20.0, abs=1e-12)


def test_reward_throughput_shortfall_hand_case():
    reward, z = compute_reward(summary(throughput_mbps=1.0), fairness(0.9),
                               TARGETS, WEIGHTS)
    assert z.zeta_s == pytest.approx(0.5, abs=1e-12)
    assert reward == pytest.approx(0.4, abs=1e-12)


def test_reward_loss_penalty_in_percent():
    reward, z = compute_reward(summary(loss=0.021), fairness(1.0),
                               TARGETS, WEIGHTS)
    # fraction 0.021 vs 0.001 cap -> 2.0 percentage points over
    assert z.zeta_ploss == pytest.approx(2.0, abs=1e-9)
    assert reward == pytest.approx(1.0 - 0.2, abs=1e-9)


def test_reward_never_exceeds_fairness(rng):
    for _ in range(500):
        s = summary(throughput_mbps=float(rng.uniform(0, 5)),
                    delay_ms=float(rng.uniform(0, 20)),
                    jitter_ms=float(rng.uniform(0, 8)),
                    loss=float(rng.uniform(0, 0.2)))
        f = fairness(float(rng.uniform(0.3, 1.0)))
        reward, z = compute_reward(s, f, TARGETS, WEIGHTS)
        assert reward <= f.f + 1e-12
        feasible = (z.zeta_s == 0 and z.zeta_d == 0 and z.zeta_j == 0
                    and z.zeta_ploss == 0)
        assert (abs(reward - f.f) < 1e-12) == feasible


def test_zetas_zero_exactly_on_feasible_side():
    at_target = summary(throughput_mbps=1.5, delay_ms=5.0, jitter_ms=2.0,
                        loss=0.001)
    _, z = compute_reward(at_target, fairness(), TARGETS, WEIGHTS)
    assert (z.zeta_s, z.zeta_d, z.zeta_j, z.zeta_ploss) == (0, 0, 0, 0)


def test_weights_must_be_nonnegative():
    with pytest.raises(ValueError):
        RewardWeights(-1.0, 10.0, 10.0, 0.1)


# -- state ---------------------------------------------------------------------

def test_state_normalization_fixed_point():
    s = summary(throughput_mbps=1.5, delay_ms=5.0, jitter_ms=2.0, loss=0.001)
    vec = build_state(s, fairness(0.77), TARGETS)
    assert vec == pytest.approx([0.77, 1.0, 1.0, 1.0, 1.0])


def test_state_scaling_and_clip():
    s = summary(throughput_mbps=3.0, delay_ms=500.0, jitter_ms=0.0, loss=0.0)
    vec = build_state(s, fairness(1.0), TARGETS)
    assert vec[1] == pytest.approx(2.0)
    assert vec[2] == 10.0  # clipped
    assert vec[3] == 0.0 and vec[4] == 0.0


# -- environment ------------------------------------------------------------------

def test_env_step_applies_action_and_reports():
    env = WifiEnv(tiny_traffic_scenario(epochs=3))
    state0 = env.reset()
    assert state0 == pytest.approx([1.0, 0.0, 0.0, 0.0, 0.0])
    state, reward, diag = env.step(5)
    point = env.lattice[5]
    assert env.sim.ai.thresholds.cst_dbm == point.cst_dbm
    assert env.sim.ai.thresholds.rst_dbm == point.rst_dbm
    assert env.sim.ai.thresholds.power_dbm == point.power_dbm
    assert diag.action_index == 5
    assert np.all(np.isfinite(state))


def test_env_step_rejects_bad_action_index():
    env = WifiEnv(tiny_traffic_scenario(epochs=2))
    env.reset()
    with pytest.raises(ValueError):
        env.step(99)


def test_apply_action_rejects_off_lattice_point():
    env = WifiEnv(tiny_traffic_scenario(epochs=2))
    env.reset()
    with pytest.raises(ValueError):
        env.apply_action(ActionPoint(-82.0, -101.0, 16.0))


def test_env_zero_traffic_epoch():
    env = WifiEnv(two_node_scenario(epochs=2))
    env.reset()
    state, reward, diag = env.step(0)
    assert diag.qos.sent == 0
    assert diag.fairness.f == 1.0
    assert state == pytest.approx([1.0, 0.0, 0.0, 0.0, 0.0])
    # silent epoch: the throughput floor is the only violated constraint
    assert diag.penalties.zeta_s == pytest.approx(1.5)
    assert reward == pytest.approx(1.0 - 1.5)


def test_env_trajectory_reproducible():
    def trajectory():
        env = WifiEnv(tiny_traffic_scenario(epochs=4))
        env.reset()
        out = []
        for a in (0, 3, 7, 3):
            state, reward, _ = env.step(a)
            out.append((tuple(state), reward))
        return out

    assert trajectory() == trajectory()
