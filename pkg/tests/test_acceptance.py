"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. The end-to-end comparison (criteria 8-10) shares a pool of
20 seeded desk-scale runs built once per session.
"""

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as scipy_stats

from conftest import desk_scenario, tiny_traffic_scenario
from fairsense import channel as ch
from fairsense.cli import run as run_scenario
from fairsense.config import scenario_from_dict, scenario_to_dict
from fairsense.dqn import DqnAgent, QNetwork, Transition
from fairsense.config import AgentConfig
from fairsense.engine import RngService
from fairsense.fairness import (DurationTable, jain_index,
                                process_control_frame, reset_window)
from fairsense.mac import (Frame, FrameKind, MacTimings, Packet,
                           exchange_duration_ns)
from fairsense.metrics import QosTracker
from fairsense.network import Simulation
from fairsense.rlenv import (QosTargets, RewardWeights, action_lattice,
                             compute_reward)
from fairsense.channel import ThresholdBounds

from conftest import ScriptedRng
from test_dqn import gradcheck, run_bandit
from test_fairness import brute_force_jain, replay_frame_log
from test_metrics import brute_force_summary, make_tracker_with

PASS = "PASS criterion {n}: {msg}"


# -- 1. fairness oracle ------------------------------------------------------------

def test_criterion_01_fairness_oracle():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(key=101))
    for _ in range(50):
        n = int(rng.integers(1, 15))
        vals = [int(v) for v in rng.integers(0, 100_000, size=n)]
        table = DurationTable.for_bss("AP", [f"s{i}" for i in range(n)])
        for i, v in enumerate(vals):
            table.entries[f"s{i}"] = v
        expect = brute_force_jain(vals)
        assert jain_index(table).f == pytest.approx(expect, rel=1e-12)

    for _ in range(10_000):
        n = int(rng.integers(1, 15))
        vals = rng.integers(0, 1000, size=n)
        table = DurationTable.for_bss("AP", [f"s{i}" for i in range(n)])
        for i, v in enumerate(vals):
            table.entries[f"s{i}"] = int(v)
        f = jain_index(table).f
        assert 1.0 / n - 1e-12 <= f <= 1.0 + 1e-12
        c = int(rng.integers(2, 50))
        for i, v in enumerate(vals):
            table.entries[f"s{i}"] = int(v) * c
        assert jain_index(table).f == pytest.approx(f, rel=1e-12)
        perm = rng.permutation(n)
        for i, j in enumerate(perm):
            table.entries[f"s{i}"] = int(vals[j])
        assert jain_index(table).f == pytest.approx(f, rel=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(PASS.format(n=1, msg=f"50 oracle vectors + 10^4 property cases "
                               f"in {elapsed:.2f}s"))


# -- 2. control-frame accounting equivalence ------------------------------------------

def test_criterion_02_duration_table_replay():
    sim = Simulation(tiny_traffic_scenario(epochs=500), log_frames=True)
    for _ in range(500):
        sim.advance_epoch()
    assert len(sim.medium.frame_log) > 10_000
    t0 = time.perf_counter()
    replayed = replay_frame_log(sim)
    elapsed = time.perf_counter() - t0
    assert replayed == sim.duration_snapshots  # integer-us equality
    assert elapsed < 5.0

    # RTS-path vs CTS-path agreement under the duration chaining rule
    timings = sim.timings
    for payload in (0, 200, 1500, 8000):
        rts_dur = timings.rts_duration_us(payload)
        cts_dur = timings.cts_duration_us(rts_dur)
        assert (timings.cts_airtime_us + timings.sifs_us + cts_dur) == rts_dur
    print(PASS.format(n=2, msg=f"replayed {len(sim.medium.frame_log)} frames "
                               f"over 500 epochs in {elapsed:.2f}s, "
                               f"tables identical"))


# -- 3. channel statistics --------------------------------------------------------------

def test_criterion_03_channel_statistics():
    t0 = time.perf_counter()
    svc = RngService(303)
    for idx, m in enumerate((1.0, 1.5, 2.0)):
        params = ch.ChannelParams(nakagami_m=m)
        sampler = ch.FadingSampler(params, svc.stream("fading", idx),
                                   batch=65_536)
        draws = np.array([sampler.draw() for _ in range(1_000_000)])
        assert abs(draws.mean() - 1.0) < 0.01
        assert abs(draws.var() - 1.0 / m) < 0.02 / m
        if m == 1.0:
            ks = scipy_stats.kstest(draws, "expon").statistic
            assert ks < 0.002

    params = ch.ChannelParams(alpha=3.0, d0_m=1.0)
    assert ch.path_gain(1.0, params) == 1.0
    assert ch.path_gain(2.0, params) == 0.125
    assert ch.path_gain(10.0, params) == pytest.approx(1e-3, rel=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(PASS.format(n=3, msg=f"3x10^6 fading draws + path-gain spot values "
                               f"in {elapsed:.2f}s"))


# -- 4. MAC timing golden test ------------------------------------------------------------

def test_criterion_04_mac_timing_golden():
    t0 = time.perf_counter()
    from conftest import two_node_scenario
    sim = Simulation(two_node_scenario())
    sta = sim.nodes["STA_AI"]
    sta.rng = ScriptedRng(integers=[5])
    completions = []
    sta.on_exchange_complete = lambda pkt, now: completions.append(now)
    sta.enqueue(Packet(packet_id=1, dst="AP1", payload_bytes=1500,
                       enqueue_ns=0))
    sim.engine.run_until(5_000_000)
    t = sim.timings
    expect = t.difs_ns + 5 * t.slot_ns + exchange_duration_ns(1500, t)
    assert completions == [expect]

    # forced-equal-backoff collision, then divergent retries succeed
    from test_mac import build_three_node_sim
    sim2 = build_three_node_sim()
    a, b = sim2.nodes["STA_A"], sim2.nodes["STA_B"]
    a.rng = ScriptedRng(integers=[3, 2])
    b.rng = ScriptedRng(integers=[3, 5])
    a.enqueue(Packet(packet_id=1, dst="AP1", payload_bytes=800, enqueue_ns=0))
    b.enqueue(Packet(packet_id=2, dst="AP1", payload_bytes=800, enqueue_ns=0))
    cw_seen = []
    orig = a.on_collision

    def spy():
        cw_seen.append(a.cw)
        orig()
        cw_seen.append(a.cw)

    a.on_collision = spy
    sim2.engine.run_until(30_000_000)
    assert a.stats.retries == 1 and b.stats.retries == 1
    assert a.stats.delivered == 1 and b.stats.delivered == 1
    assert cw_seen == [15, 31]  # doubled on the collision
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(PASS.format(n=4, msg=f"delivery at exactly {expect} ns; collision "
                               f"doubled CW 15->31 then recovered "
                               f"({elapsed:.2f}s)"))


# -- 5. metrics oracle -------------------------------------------------------------------

def _recompute_from_packets_csv(path: Path, epochs: int, epoch_ns: int):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "send_ns": int(r["send_ns"]),
                "bytes": int(r["payload_bytes"]),
                "recv_ns": int(r["recv_ns"]) if r["recv_ns"] else None,
                "drop_ns": int(r["drop_ns"]) if r["drop_ns"] else None,
            })
    return [brute_force_summary(rows, k * epoch_ns, (k + 1) * epoch_ns)
            for k in range(epochs)]


def test_criterion_05_metrics_oracle(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=505))
    # 18 randomized synthetic ledgers
    for _ in range(18):
        window = 100_000_000
        recs, rows = [], []
        for pid in range(int(rng.integers(1, 150))):
            send = int(rng.integers(0, window - 30_000_000))
            nbytes = int(rng.integers(40, 9000))
            fate = rng.random()
            recv = drop = None
            if fate < 0.7:
                recv = send + int(rng.integers(1, 25_000_000))
            elif fate < 0.9:
                drop = send + int(rng.integers(1, 25_000_000))
            recs.append((pid, send, nbytes, "uplink", recv, drop))
            rows.append({"send_ns": send, "bytes": nbytes, "recv_ns": recv,
                         "drop_ns": drop})
        got = make_tracker_with(recs).close_window(0, window)
        exp = brute_force_summary(rows, 0, window)
        assert (got.sent, got.received) == (exp[4], exp[5])
        for got_v, exp_v in zip(
                (got.throughput_bps, got.avg_delay_ms, got.jitter_ms,
                 got.loss_rate), exp[:4]):
            assert got_v == pytest.approx(exp_v, rel=1e-9, abs=1e-12)

    # 2 real runs recomputed from their packets.csv artifacts
    for seed in (11, 12):
        sc = tiny_traffic_scenario(seed=seed, epochs=10)
        out = tmp_path / f"run{seed}"
        run_scenario(sc, out)
        live = []
        with open(out / "epochs.csv", newline="") as fh:
            for r in csv.DictReader(fh):
                live.append(r)
        recomputed = _recompute_from_packets_csv(out / "packets.csv", 10,
                                                 sc.epoch_ns)
        for row, exp in zip(live, recomputed):
            assert int(row["sent"]) == exp[4]
            assert int(row["received"]) == exp[5]
            assert float(row["throughput_bps"]) == pytest.approx(exp[0],
                                                                 rel=1e-9)
            assert float(row["avg_delay_ms"]) == pytest.approx(exp[1],
                                                               rel=1e-9)
            assert float(row["jitter_ms"]) == pytest.approx(exp[2], rel=1e-9)
            assert float(row["loss_rate"]) == pytest.approx(exp[3], rel=1e-9)

    # the stated spot vectors
    recs = [
        (1, 0, 100, "uplink", 2_000_000, None),
        (2, 1000, 100, "uplink", 1000 + 4_000_000, None),
        (3, 2000, 100, "uplink", 2000 + 6_000_000, None),
    ]
    s = make_tracker_with(recs).close_window(0, 100_000_000)
    assert s.avg_delay_ms == pytest.approx(4.0, rel=1e-12)
    assert s.jitter_ms == pytest.approx(2.0, rel=1e-12)
    recs = [(i, i * 10, 100, "uplink", i * 10 + 500, None) for i in range(9)]
    recs.append((9, 95, 100, "uplink", None, 9_000_000))
    s = make_tracker_with(recs).close_window(0, 100_000_000)
    assert s.loss_rate == pytest.approx(0.10, rel=1e-12)
    print(PASS.format(n=5, msg="18 synthetic + 2 live-run recomputations "
                               "match; spot vectors exact"))


# -- 6. DQN sanity ------------------------------------------------------------------------

def test_criterion_06_dqn_sanity():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(key=606))
    worst = 0.0
    for i in range(100):
        sizes = [int(rng.integers(2, 5)), int(rng.integers(3, 8)),
                 int(rng.integers(2, 5))]
        n_params = (sizes[0] * sizes[1] + sizes[1]
                    + sizes[1] * sizes[2] + sizes[2])
        assert n_params <= 100
        net = QNetwork(sizes, np.random.Generator(np.random.Philox(key=i)))
        x = rng.uniform(-1.0, 1.0, size=(3, sizes[0]))
        worst = max(worst, gradcheck(net, x))
    assert worst < 1e-4

    passes = 0
    q_values = []
    for seed in range(1, 21):
        greedy_ok, q_opt = run_bandit(seed=seed)
        q_values.append(q_opt)
        if greedy_ok == 2 and 4.5 <= q_opt <= 5.5:
            passes += 1
    elapsed = time.perf_counter() - t0
    assert passes >= 19
    assert elapsed < 60.0
    print(PASS.format(n=6, msg=f"gradcheck worst rel err {worst:.2e}; bandit "
                               f"{passes}/20 seeds at Q in "
                               f"[{min(q_values):.2f}, {max(q_values):.2f}] "
                               f"({elapsed:.1f}s)"))


# -- 7. reward / feasibility coherence ------------------------------------------------------

def test_criterion_07_reward_feasibility_coherence():
    t0 = time.perf_counter()
    from test_rlenv import summary, fairness
    targets = QosTargets(1.5, 5.0, 2.0, 0.001)
    weights = RewardWeights(1.0, 10.0, 10.0, 0.1)
    rng = np.random.Generator(np.random.Philox(key=707))
    for _ in range(10_000):
        s = summary(throughput_mbps=float(rng.uniform(0.0, 3.0)),
                    delay_ms=float(rng.uniform(0.0, 10.0)),
                    jitter_ms=float(rng.uniform(0.0, 4.0)),
                    loss=float(rng.uniform(0.0, 0.01)))
        f = fairness(float(rng.uniform(0.2, 1.0)))
        reward, z = compute_reward(s, f, targets, weights)
        feasible = (s.throughput_bps / 1e6 >= targets.s_min_mbps
                    and s.avg_delay_ms <= targets.d_max_ms
                    and s.jitter_ms <= targets.j_max_ms
                    and s.loss_rate <= targets.ploss_max)
        assert (reward == f.f) == feasible
        assert (z.zeta_s == 0.0) == (s.throughput_bps / 1e6 >= targets.s_min_mbps)
        assert (z.zeta_d == 0.0) == (s.avg_delay_ms <= targets.d_max_ms)
        assert (z.zeta_j == 0.0) == (s.jitter_ms <= targets.j_max_ms)
        assert (z.zeta_ploss == 0.0) == (s.loss_rate <= targets.ploss_max)
        assert reward <= f.f
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(PASS.format(n=7, msg=f"10^4 random pairs coherent in {elapsed:.2f}s"))


# -- 8-10. end-to-end comparison pool -----------------------------------------------------

N_SEEDS = 10
FINAL_K = 100


def _desk_worker(args):
    scenario_dict, controller, seed, out_dir = args
    data = dict(scenario_dict)
    data["seed"] = seed
    data["controller"] = controller
    t0 = time.perf_counter()
    summary = run_scenario(scenario_from_dict(data), out_dir)
    return controller, seed, summary, time.perf_counter() - t0, out_dir


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    scenario_dict = scenario_to_dict(desk_scenario())
    jobs = [(scenario_dict, controller, seed,
             str(base / f"{controller}_{seed}"))
            for controller in ("static", "dqn")
            for seed in range(1, N_SEEDS + 1)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(_desk_worker, jobs))
    return {(ctl, seed): (summary, wall, out)
            for ctl, seed, summary, wall, out in results}


def test_criterion_08_dqn_beats_static_directionally(desk_runs):
    fairness_wins = throughput_wins = 0
    for seed in range(1, N_SEEDS + 1):
        dqn, dqn_wall, _ = desk_runs[("dqn", seed)]
        static, static_wall, _ = desk_runs[("static", seed)]
        assert dqn_wall < 300.0 and static_wall < 300.0
        assert dqn["final_k"] == static["final_k"] == FINAL_K
        if dqn["final"]["fairness"] >= static["final"]["fairness"]:
            fairness_wins += 1
        if dqn["final"]["throughput_bps"] >= static["final"]["throughput_bps"]:
            throughput_wins += 1
    assert fairness_wins >= 6
    assert throughput_wins >= 6
    print(PASS.format(n=8, msg=f"paired seeds: fairness {fairness_wins}/10, "
                               f"throughput {throughput_wins}/10 for the "
                               f"learning controller"))


def test_criterion_09_determinism(tmp_path):
    sc = tiny_traffic_scenario(epochs=8)
    run_scenario(sc, tmp_path / "a")
    run_scenario(sc, tmp_path / "b")
    for name in ("epochs.csv", "frames.csv", "packets.csv"):
        assert (tmp_path / "a" / name).read_bytes() \
            == (tmp_path / "b" / name).read_bytes()

    rng = np.random.Generator(np.random.Philox(key=909))
    cfg = AgentConfig(batch=8, buffer=64, hidden=(16, 16))
    agent = DqnAgent(5, 8, cfg, rng)
    for _ in range(50):
        agent.observe(Transition(rng.uniform(0, 1, 5), int(rng.integers(8)),
                                 float(rng.uniform(-3, 1)),
                                 rng.uniform(0, 1, 5)))
    agent.save(tmp_path / "ckpt.npz")
    clone = DqnAgent.load(tmp_path / "ckpt.npz",
                          np.random.Generator(np.random.Philox(key=1)))
    for _ in range(50):
        x = rng.uniform(-1, 2, size=5)
        assert np.array_equal(agent.net.forward(x), clone.net.forward(x))
    print(PASS.format(n=9, msg="byte-identical CSVs on rerun; checkpoint "
                               "forward passes bit-exact"))


def test_criterion_10_action_lattice_conformance(desk_runs):
    bounds = ThresholdBounds(cst=(-100.0, -20.0), rst=(-110.0, -30.0),
                             power=(10.0, 30.0))
    points = action_lattice(bounds, 1)
    assert len(points) == 8
    expect = {(c, r, p)
              for c in (-100.0, -20.0)
              for r in (-110.0, -30.0)
              for p in (10.0, 30.0)}
    assert {(a.cst_dbm, a.rst_dbm, a.power_dbm) for a in points} == expect

    lattice_set = expect
    checked_rows = 0
    for seed in range(1, N_SEEDS + 1):
        _, _, out = desk_runs[("dqn", seed)]
        with open(Path(out) / "epochs.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                triple = (float(row["cst_dbm"]), float(row["rst_dbm"]),
                          float(row["power_dbm"]))
                assert triple in lattice_set
                checked_rows += 1
    assert checked_rows == N_SEEDS * 500
    print(PASS.format(n=10, msg=f"8 lattice actions exact; all "
                                f"{checked_rows} executed actions on lattice"))
