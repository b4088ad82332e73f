"""Post-run reporting: summary tables and figures from a run directory.

Reads the CSVs a run wrote (satisfaction, loop2, energy, solutions,
rewards) and renders per-slice satisfaction, the energy balance, and the
utility series as SVG line/bar charts next to plot-ready CSV tables.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fwasim"

import matplotlib.pyplot as plt


class ReportError(RuntimeError):
    pass


def _read_csv(path: Path) -> list[dict[str, str]]:
    if not path.exists():
        raise ReportError(f"missing input: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    """Build the report bundle; returns a summary dict and writes files.

    Outputs: ``summary.txt``, ``utility.csv``, and the SVG figures
    ``satisfaction.svg``, ``energy.svg``, ``utility.svg`` (plus
    ``rewards.svg`` when a reward curve exists).
    """
    run = Path(run_dir)
    if not run.is_dir():
        raise ReportError(f"run directory not found: {run}")
    out = Path(out_dir) if out_dir else run / "report"
    out.mkdir(parents=True, exist_ok=True)

    sat_rows = _read_csv(run / "satisfaction.csv")
    energy_rows = _read_csv(run / "energy.csv")
    solution_rows = _read_csv(run / "solutions.csv")

    # -- per-slice satisfaction table and chart -------------------------
    slices = [int(r["slice"]) for r in sat_rows]
    fractions = [float(r["fraction"]) for r in sat_rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar([str(s) for s in slices], fractions, color="#40728a")
    ax.set_xlabel("slice")
    ax.set_ylabel("delay-budget satisfaction")
    ax.set_ylim(0, 1.05)
    ax.axhline(1.0, color="grey", lw=0.6, ls="--")
    fig.tight_layout()
    fig.savefig(out / "satisfaction.svg", metadata={"Date": None})
    plt.close(fig)

    # -- energy balance ---------------------------------------------------
    hours = [int(r["hour"]) for r in energy_rows]
    if hours:
        fig, ax = plt.subplots(figsize=(6.4, 3.4))
        ax.plot(hours, [float(r["g"]) for r in energy_rows], label="solar kWh")
        ax.plot(hours, [float(r["h_plus"]) for r in energy_rows], label="grid buy kWh")
        ax.plot(hours, [float(r["L_cons"]) for r in energy_rows], label="consumption kWh")
        ax.plot(hours, [float(r["level"]) for r in energy_rows], label="storage kWh")
        ax.plot(hours, [float(r["h_minus"]) for r in energy_rows], label="surplus kWh")
        ax.set_xlabel("hour")
        ax.set_ylabel("energy (kWh)")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(out / "energy.svg", metadata={"Date": None})
        plt.close(fig)

    # -- utility series ----------------------------------------------------
    utility_rows = []
    for r in solution_rows:
        hour = int(r["hour"])
        cost = float(r["H"])
        comm = float(r["rb_revenue"]) * _rb_price(solution_rows, r)
        utility_rows.append((hour, cost, comm, comm - cost))
    with open(out / "utility.csv", "w", encoding="utf-8") as fh:
        fh.write("hour,energy_cost,comm_utility,total_utility\n")
        for row in utility_rows:
            fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
    if utility_rows:
        fig, ax = plt.subplots(figsize=(6.4, 3.4))
        ax.plot([r[0] for r in utility_rows], [r[3] for r in utility_rows],
                color="black", label="total utility ($)")
        ax.plot([r[0] for r in utility_rows], [r[2] for r in utility_rows],
                color="#1f5fa8", label="communication utility ($)")
        ax.plot([r[0] for r in utility_rows], [r[1] for r in utility_rows],
                color="#a33", label="energy cost ($)")
        ax.set_xlabel("hour")
        ax.set_ylabel("$")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out / "utility.svg", metadata={"Date": None})
        plt.close(fig)

    rewards_path = run / "rewards.csv"
    if rewards_path.exists():
        reward_rows = _read_csv(rewards_path)
        if reward_rows:
            fig, ax = plt.subplots(figsize=(6.4, 3.0))
            ax.plot(
                [int(r["epoch"]) for r in reward_rows],
                [float(r["reward_main"]) for r in reward_rows],
                lw=0.8,
            )
            ax.set_xlabel("slow-loop epoch")
            ax.set_ylabel("main reward")
            fig.tight_layout()
            fig.savefig(out / "rewards.svg", metadata={"Date": None})
            plt.close(fig)

    summary_lines = ["per-slice delay-budget satisfaction"]
    summary_lines.append(f"{'slice':>6} {'5QI':>5} {'budget ms':>10} {'fraction':>9}")
    for r in sat_rows:
        summary_lines.append(
            f"{r['slice']:>6} {r['fiveqi']:>5} {float(r['budget_ms']):>10.0f} "
            f"{float(r['fraction']):>9.4f}"
        )
    total_sat = sum(int(r["satisfied"]) for r in sat_rows)
    total_all = sum(int(r["total"]) for r in sat_rows)
    aggregate = total_sat / total_all if total_all else 1.0
    summary_lines.append(f"aggregate: {total_sat}/{total_all} = {aggregate:.4f}")
    if energy_rows:
        bought = sum(float(r["h_plus"]) for r in energy_rows)
        sold = sum(float(r["h_minus"]) for r in energy_rows)
        cost = sum(float(r["H"]) for r in energy_rows)
        summary_lines.append(
            f"energy: bought {bought:.2f} kWh, surplus {sold:.2f} kWh, "
            f"net cost {cost:.2f} $ over {len(energy_rows)} h"
        )
    (out / "summary.txt").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")

    return {
        "aggregate_satisfaction": aggregate,
        "slices": len(sat_rows),
        "hours": len(energy_rows),
        "out_dir": str(out),
    }


def _rb_price(rows, row) -> float:
    # F = H - price * revenue, so the price can be recovered when revenue > 0
    rev = float(row["rb_revenue"])
    if rev > 0:
        return (float(row["H"]) - float(row["F"])) / rev
    return 0.0
