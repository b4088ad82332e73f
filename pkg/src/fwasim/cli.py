"""Command-line entry points: run, train, predict, report.

`FWA_LOG` sets the log level (DEBUG/INFO/WARNING/...).  Every output file
is UTF-8 CSV/JSON/SVG under the chosen --out directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import forecast as fc
from .engine import POLICIES, Simulation
from .energy import InfeasibleHourError
from .report import ReportError, render_report
from .rl import load_checkpoint, save_checkpoint
from .scenario import ScenarioError, build_spec, load_scenario, write_scenario
from .training import train

log = logging.getLogger("fwasim")


def _setup_logging() -> None:
    level = os.environ.get("FWA_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _load_spec(args) -> "ScenarioSpec":
    if args.scenario:
        spec = load_scenario(args.scenario)
        if args.seed is not None and args.seed != spec.seed:
            raw = dict(spec.raw)
            raw["seed"] = args.seed
            spec = build_spec(raw)
        return spec
    return build_spec({"paper_defaults": True, "seed": args.seed if args.seed is not None else 42})


def cmd_run(args) -> int:
    spec = _load_spec(args)
    net = None
    if args.policy in ("rl", "dqn"):
        if args.checkpoint:
            net = load_checkpoint(args.checkpoint)
        else:
            log.warning("policy %s without --checkpoint: loops fall back to rules", args.policy)
    sim = Simulation(spec, policy=args.policy, net=net)
    report = sim.run(args.hours)
    out = Path(args.out)
    report.write_outputs(out)
    write_scenario(spec, out / "scenario.json")
    print(
        f"satisfaction {report.aggregate_satisfaction:.4f} "
        f"({sum(s for s, _ in report.slice_satisfaction.values())}/{report.total_samples} samples), "
        f"mean main reward {report.mean_main_reward:.4f}, "
        f"outputs in {out}"
    )
    if report.invariant_violations:
        print(f"WARNING: {len(report.invariant_violations)} invariant violations", file=sys.stderr)
        return 2
    return 0


def cmd_train(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    algos = [args.algo] if args.algo else ["apex", "dqn"]
    for algo in algos:
        result = train(
            spec,
            algo=algo,
            steps=args.steps,
            parallel_actors=args.parallel_actors,
            deterministic=args.deterministic or args.parallel_actors <= 1,
        )
        ckpt = out / f"{algo}.qnet"
        save_checkpoint(result.net, ckpt)
        result.write_curve(out / f"{algo}_curve.csv")
        print(f"{algo}: {result.total_steps} steps, checkpoint {ckpt}")
    return 0


def cmd_predict(args) -> int:
    if args.tau < 1:
        print("error: --tau must be >= 1", file=sys.stderr)
        return 2
    rows = _read_solutions(Path(args.solutions))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["target,horizon,predicted,actual,abs_error"]
    table = ["target        model_mse  persistence_mse  moving_avg_mse"]
    for target, series in (
        ("rb", np.array([r[0] for r in rows])),
        ("cost", np.array([r[1] for r in rows])),
    ):
        window = min(fc.ClConfig().window, max(8, (len(series) - args.tau) // 3))
        cfg = fc.ClConfig(window=window)
        history, actual = series[: -args.tau], series[-args.tau :]
        if len(history) < window + 1:
            print(
                f"error: {target}: insufficient history "
                f"({len(history)} records, need {window + 1 + args.tau})",
                file=sys.stderr,
            )
            return 2
        model = fc.fit_initial(history, cfg)
        predicted = fc.predict(model, history, args.tau)
        persistence = fc.persistence_forecast(history, args.tau)
        moving = fc.moving_average_forecast(history, args.tau)
        for h in range(args.tau):
            lines.append(
                f"{target},{h + 1},{predicted[h]!r},{actual[h]!r},"
                f"{abs(predicted[h] - actual[h])!r}"
            )
        table.append(
            f"{target:<12} {fc.forecast_mse(predicted, actual):>10.4f} "
            f"{fc.forecast_mse(persistence, actual):>16.4f} "
            f"{fc.forecast_mse(moving, actual):>15.4f}"
        )
        fc.save_cl_checkpoint(model, out / f"{target}.clnet")
    (out / "forecast.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(table))
    print(f"forecasts in {out / 'forecast.csv'}")
    return 0


def _read_solutions(path: Path) -> list[tuple[float, float]]:
    import csv as _csv

    if not path.exists():
        raise ScenarioError(f"solution history not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            (float(row["rb_revenue"]), float(row["H"]))
            for row in _csv.DictReader(fh)
        ]


def cmd_report(args) -> int:
    summary = render_report(args.run_dir, args.out)
    print(
        f"report for {args.run_dir}: {summary['slices']} slices, "
        f"aggregate satisfaction {summary['aggregate_satisfaction']:.4f}, "
        f"figures in {summary['out_dir']}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwasim",
        description="Closed-loop sliced-RB and renewable-energy simulator for 5G FWA",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the multi-timescale simulation")
    run_p.add_argument("--scenario", help="scenario JSON (defaults to the built-in world)")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--hours", type=int, default=None, help="simulated hours")
    run_p.add_argument("--policy", choices=POLICIES, default="rules")
    run_p.add_argument("--checkpoint", help="Q-network checkpoint for rl/dqn policies")
    run_p.add_argument("--out", default="out/run")
    run_p.add_argument("--deterministic", action="store_true",
                       help="single-threaded fixed schedule (runs already are)")
    run_p.add_argument("--parallel-actors", type=int, default=1)
    run_p.set_defaults(func=cmd_run)

    train_p = sub.add_parser("train", help="train the Ape-X and DQN policies")
    train_p.add_argument("--scenario")
    train_p.add_argument("--seed", type=int, default=None)
    train_p.add_argument("--steps", type=int, default=None)
    train_p.add_argument("--algo", choices=["apex", "dqn"], default=None,
                         help="train a single algorithm (default: both)")
    train_p.add_argument("--out", default="out/train")
    train_p.add_argument("--deterministic", action="store_true")
    train_p.add_argument("--parallel-actors", type=int, default=1)
    train_p.set_defaults(func=cmd_train)

    predict_p = sub.add_parser("predict", help="forecast RB grants and energy cost")
    predict_p.add_argument("solutions", help="solutions.csv from a run")
    predict_p.add_argument("--tau", type=int, default=24, help="hours ahead")
    predict_p.add_argument("--out", default="out/predict")
    predict_p.set_defaults(func=cmd_predict)

    report_p = sub.add_parser("report", help="tables and figures from a run directory")
    report_p.add_argument("run_dir")
    report_p.add_argument("--out", default=None)
    report_p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ReportError, InfeasibleHourError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
