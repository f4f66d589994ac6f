"""Flat-file outputs: versioned CSV, JSON run summaries, and figures.

CSV and JSON writers are byte-deterministic: floats use repr (shortest
round-trip form) and JSON keys are sorted.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiment import METRICS_COLUMNS, MetricsRecord, SweepRow


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(records: list[MetricsRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(v) for v in rec.row()])


def write_summary_json(summary: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_sweep_csv(rows: list[SweepRow], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["size", "engine", "mean_satisfaction", "std_satisfaction", "replications"])
        for r in rows:
            writer.writerow(
                [r.size, r.engine, _fmt(r.mean_satisfaction), _fmt(r.std_satisfaction), r.replications]
            )


def render_run_figure(records: list[MetricsRecord], path: Path, title: str = "") -> None:
    """Satisfaction trace over iterations, with perturbation events marked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    its = [r.iteration for r in records]
    sats = [r.global_satisfaction for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(its, sats, marker="o", markersize=3, lw=1.2, label="global satisfaction")
    for rec in records:
        if rec.event:
            ax.axvline(rec.iteration, color="crimson", ls="--", lw=0.8)
            ax.annotate(
                rec.event,
                xy=(rec.iteration, min(sats)),
                rotation=90,
                fontsize=7,
                va="bottom",
                ha="right",
            )
    ax.set_xlabel("iteration")
    ax.set_ylabel("global satisfaction")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figure(rows: list[SweepRow], path: Path, title: str = "") -> None:
    """Mean satisfaction vs network size per engine, with std error bars."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    engines = sorted({r.engine for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for engine in engines:
        sub = sorted((r for r in rows if r.engine == engine), key=lambda r: r.size)
        ax.errorbar(
            [r.size for r in sub],
            [r.mean_satisfaction for r in sub],
            yerr=[r.std_satisfaction for r in sub],
            marker="o",
            capsize=3,
            label=engine,
        )
    ax.set_xlabel("number of source drones")
    ax.set_ylabel("mean global satisfaction")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
