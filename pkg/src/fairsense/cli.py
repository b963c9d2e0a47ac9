"""Run orchestration and the command-line interface.

`simulate` executes the controller named in the config, `train` forces the
learning controller, `compare` tabulates finished run directories. Every
run directory is self-contained: the exact config snapshot, the per-epoch
CSV, and a summary; re-running the snapshot reproduces the CSVs byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .baselines import make_controller
from .config import ConfigError, Scenario, load_scenario, save_scenario
from .dqn import DqnAgent, train_loop
from .engine import RngService
from .network import Simulation
from .rlenv import (EpochDiag, QosTargets, RewardWeights, WifiEnv,
                    build_state, compute_reward)

CSV_COLUMNS = [
    "epoch", "throughput_bps", "avg_delay_ms", "jitter_ms", "loss_rate",
    "fairness", "cst_dbm", "rst_dbm", "power_dbm", "reward",
    "sent", "received", "zeta_s", "zeta_d", "zeta_j", "zeta_ploss",
]

SUMMARY_METRICS = ["fairness", "throughput_bps", "avg_delay_ms", "jitter_ms",
                   "loss_rate", "reward"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _diag_row(diag: EpochDiag) -> dict:
    q = diag.qos
    th = diag.thresholds
    z = diag.penalties
    return {
        "epoch": diag.epoch,
        "throughput_bps": q.throughput_bps,
        "avg_delay_ms": q.avg_delay_ms,
        "jitter_ms": q.jitter_ms,
        "loss_rate": q.loss_rate,
        "fairness": diag.fairness.f,
        "cst_dbm": th.cst_dbm,
        "rst_dbm": th.rst_dbm,
        "power_dbm": th.power_dbm,
        "reward": diag.reward,
        "sent": q.sent,
        "received": q.received,
        "zeta_s": z.zeta_s,
        "zeta_d": z.zeta_d,
        "zeta_j": z.zeta_j,
        "zeta_ploss": z.zeta_ploss,
    }


def _write_epochs_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])


def _mean_over(rows: list[dict], keys: list[str]) -> dict:
    if not rows:
        return {k: 0.0 for k in keys}
    return {k: sum(r[k] for r in rows) / len(rows) for k in keys}


def _write_summary(path: Path, scenario: Scenario, rows: list[dict]) -> dict:
    k = min(scenario.final_k, len(rows))
    summary = {
        "controller": scenario.controller,
        "seed": scenario.seed,
        "epochs": len(rows),
        "final_k": k,
        "mean": _mean_over(rows, SUMMARY_METRICS),
        "final": _mean_over(rows[-k:], SUMMARY_METRICS),
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _write_frames_csv(path: Path, sim: Simulation) -> None:
    log = sim.medium.frame_log or []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_ns", "end_ns", "kind", "src", "dst",
                         "duration_us", "payload_bytes", "outcome",
                         "observed_ai", "exchange_id"])
        for row in log:
            writer.writerow([row.start_ns, row.end_ns, row.kind, row.src,
                             row.dst, row.duration_us, row.payload_bytes,
                             row.outcome, int(row.observed_ai),
                             row.exchange_id])


def _write_packets_csv(path: Path, sim: Simulation) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["packet_id", "flow", "payload_bytes", "send_ns",
                         "recv_ns", "drop_ns", "drop_reason"])
        for rec in sim.tracker.all_records:
            writer.writerow([
                rec.packet_id, rec.flow, rec.payload_bytes, rec.send_ns,
                "" if rec.recv_ns is None else rec.recv_ns,
                "" if rec.drop_ns is None else rec.drop_ns,
                rec.drop_reason or ""])


def run(scenario: Scenario, out_dir: str | Path,
        checkpoint: Optional[str] = None) -> dict:
    """Execute one full run and persist its artifacts; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out / "config.yaml")

    rows: list[dict] = []
    if scenario.controller == "dqn":
        env = WifiEnv(scenario)
        agent_rng = RngService(scenario.seed).stream("agent")
        agent = None
        if checkpoint:
            agent = DqnAgent.load(checkpoint, agent_rng)
        agent, diags = train_loop(env, scenario.agent, scenario.epochs,
                                  agent_rng, agent=agent)
        rows = [_diag_row(d) for d in diags]
        agent.save(out / "checkpoint.npz")
        sim = env.sim
    else:
        sim = Simulation(scenario)
        controller = make_controller(scenario)
        targets = QosTargets.from_scenario(scenario)
        weights = RewardWeights.from_scenario(scenario)
        for _ in range(scenario.epochs):
            point = controller.decide(sim.drain_ai_rssi())
            sim.set_ai_thresholds(point.as_thresholds())
            stats = sim.advance_epoch()
            reward, penalties = compute_reward(stats.qos, stats.fairness,
                                               targets, weights)
            state = build_state(stats.qos, stats.fairness, targets)
            rows.append(_diag_row(EpochDiag(
                epoch=stats.epoch, state=state, reward=reward,
                penalties=penalties, qos=stats.qos, fairness=stats.fairness,
                thresholds=stats.thresholds)))

    _write_epochs_csv(out / "epochs.csv", rows)
    summary = _write_summary(out / "summary.json", scenario, rows)
    if scenario.trace:
        _write_frames_csv(out / "frames.csv", sim)
        _write_packets_csv(out / "packets.csv", sim)
    return summary


def _run_seed_worker(args: tuple) -> dict:
    scenario_dict, seed, out_dir, checkpoint = args
    from .config import scenario_from_dict
    scenario = scenario_from_dict({**scenario_dict, "seed": seed})
    return run(scenario, out_dir, checkpoint)


def run_seeds(scenario: Scenario, out_dir: str | Path, seeds: int,
              checkpoint: Optional[str] = None,
              max_workers: Optional[int] = None) -> list[dict]:
    """Independent seeded replicas in parallel worker processes."""
    from .config import scenario_to_dict
    base = scenario_to_dict(scenario)
    out = Path(out_dir)
    jobs = [(base, scenario.seed + i, str(out / f"seed_{scenario.seed + i}"),
             checkpoint) for i in range(seeds)]
    if seeds == 1:
        return [_run_seed_worker(jobs[0])]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_seed_worker, jobs))


def compare(run_dirs: list[str | Path]) -> tuple[list[str], list[list]]:
    """Side-by-side means over finished runs with matching epoch counts.

    Returns (header, rows): one row per metric with each run's whole-run
    mean, final-window mean, and delta of the final mean against the first
    run.
    """
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    summaries = []
    for d in run_dirs:
        path = Path(d) / "summary.json"
        if not path.exists():
            raise FileNotFoundError(f"no summary.json under {d}")
        summaries.append(json.loads(path.read_text()))
    epochs = {s["epochs"] for s in summaries}
    if len(epochs) != 1:
        raise ValueError(f"runs have mismatched epoch counts: {sorted(epochs)}")
    names = [f"{Path(d).name}:{s['controller']}"
             for d, s in zip(run_dirs, summaries)]
    header = ["metric"]
    for name in names:
        header += [f"{name}/mean", f"{name}/final"]
    header.append("final_delta_vs_first")
    rows = []
    for metric in SUMMARY_METRICS:
        row: list = [metric]
        for s in summaries:
            row += [s["mean"][metric], s["final"][metric]]
        row.append(summaries[-1]["final"][metric]
                   - summaries[0]["final"][metric])
        rows.append(row)
    return header, rows


def _format_table(header: list[str], rows: list[list]) -> str:
    def fmt(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    table = [header] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths))
             for row in table]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsense",
        description="CSMA/CA simulator with an adaptive station")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p):
        p.add_argument("config", help="scenario YAML file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--epochs", type=int, help="override the epoch count")
        p.add_argument("--out", default="runs/latest", help="run directory")
        p.add_argument("--seeds", type=int, default=1,
                       help="run this many consecutive seeds in parallel")
        p.add_argument("--checkpoint", help="resume from a saved agent")

    p_sim = sub.add_parser("simulate", help="run the configured controller")
    add_run_args(p_sim)
    p_train = sub.add_parser("train", help="run the learning controller")
    add_run_args(p_train)

    p_cmp = sub.add_parser("compare", help="tabulate finished runs")
    p_cmp.add_argument("dirs", nargs="+", help="run directories")
    p_cmp.add_argument("--out", help="also write the table as CSV")
    return parser


def _scenario_from_args(args) -> Scenario:
    scenario = load_scenario(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "force_dqn", False):
        overrides["controller"] = "dqn"
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    return scenario


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("simulate", "train"):
            if args.command == "train":
                args.force_dqn = True
            scenario = _scenario_from_args(args)
            if args.seeds > 1:
                results = run_seeds(scenario, args.out, args.seeds,
                                    args.checkpoint)
                for res in results:
                    print(f"seed {res['seed']}: "
                          f"mean fairness {res['mean']['fairness']:.4f}, "
                          f"mean throughput {res['mean']['throughput_bps']:.0f} bps")
            else:
                res = run(scenario, args.out, args.checkpoint)
                print(f"run complete: {args.out}")
                print(f"  mean fairness   {res['mean']['fairness']:.4f}")
                print(f"  mean throughput {res['mean']['throughput_bps']:.0f} bps")
                print(f"  mean delay      {res['mean']['avg_delay_ms']:.3f} ms")
                print(f"  mean loss rate  {res['mean']['loss_rate']:.5f}")
            return 0
        if args.command == "compare":
            header, rows = compare(args.dirs)
            print(_format_table(header, rows))
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(header)
                    writer.writerows(rows)
            return 0
        parser.error(f"unknown command {args.command}")
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
