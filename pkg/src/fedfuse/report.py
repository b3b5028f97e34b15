"""Aggregate training runs into sweep tables and figures.

Each run directory must hold the ``run.json`` / ``metrics.csv`` pair written
by the train command. The summary CSV carries one row per run keyed by the
swept hyperparameter; figures for accuracy, uplink volume and relative
saving are rendered next to it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .fileio import ConfigError, load_run_summary, read_metrics_csv

__all__ = ["collect_runs", "summarize", "write_summary_csv", "render_figures", "report"]

SWEEP_KEYS = ("gamma", "lambda")


def _sweep_value(cfg: dict, key: str) -> float:
    if key == "gamma":
        return float(cfg["cer"]["gamma"])
    if key == "lambda":
        return float(cfg["train"]["lambda"])
    raise ConfigError(f"unsupported sweep key {key!r}; expected one of {SWEEP_KEYS}")


def collect_runs(run_dirs) -> list[dict]:
    """Load the run record and final metrics row from every directory."""
    runs = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        summary = load_run_summary(run_dir / "run.json")
        rows = read_metrics_csv(run_dir / "metrics.csv")
        mean_rows = [r for r in rows if r["client_id"] == "mean"]
        if not mean_rows:
            raise ConfigError(f"metrics file in {run_dir} has no 'mean' rows")
        runs.append({"dir": run_dir, "summary": summary, "final_row": mean_rows[-1]})
    return runs


def summarize(runs: list[dict], by: str = "gamma") -> list[dict]:
    """One row per run, sorted by the swept value; the saving column is
    relative to the run with the smallest swept value."""
    rows = []
    for run in runs:
        cfg = run["summary"]["config"]
        totals = run["summary"]["totals"]
        rows.append(
            {
                by: _sweep_value(cfg, by),
                "mean_acc": float(run["final_row"]["accuracy"]),
                "uplink_bytes": int(totals["uplink_bytes"]),
                "downlink_bytes": int(totals["downlink_bytes"]),
            }
        )
    rows.sort(key=lambda r: r[by])
    base = rows[0]["uplink_bytes"]
    for row in rows:
        row["reduction_pct"] = 100.0 * (1.0 - row["uplink_bytes"] / base) if base else 0.0
    return rows


def write_summary_csv(path, rows: list[dict], by: str = "gamma") -> None:
    columns = (by, "mean_acc", "uplink_bytes", "downlink_bytes", "reduction_pct")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])


def _axes(xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(5.5, 3.6), dpi=150)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    return fig, ax


def _maybe_log_x(ax, xs) -> None:
    positive = [x for x in xs if x > 0]
    if positive and max(positive) / min(positive) >= 100:
        ax.set_xscale("symlog", linthresh=min(positive))


def render_figures(out_dir, rows: list[dict], by: str = "gamma") -> list[Path]:
    out_dir = Path(out_dir)
    xs = [row[by] for row in rows]
    made = []
    panels = (
        ("mean_acc", "mean test accuracy", f"accuracy_vs_{by}.png"),
        ("uplink_bytes", "uplink bytes (total)", f"uplink_vs_{by}.png"),
        ("reduction_pct", "uplink reduction (%)", f"reduction_vs_{by}.png"),
    )
    for column, ylabel, filename in panels:
        fig, ax = _axes(by, ylabel)
        ax.plot(xs, [row[column] for row in rows], marker="o")
        _maybe_log_x(ax, xs)
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path)
        plt.close(fig)
        made.append(path)
    return made


def report(run_dirs, out_dir, by: str = "gamma") -> dict:
    """End-to-end aggregation: summary CSV plus figures; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(collect_runs(run_dirs), by=by)
    csv_path = out_dir / "summary.csv"
    write_summary_csv(csv_path, rows, by=by)
    figures = render_figures(out_dir, rows, by=by)
    return {"summary": csv_path, "figures": figures, "rows": rows}
