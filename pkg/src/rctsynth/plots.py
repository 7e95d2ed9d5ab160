"""Matplotlib rendering of report data files.

Reads the delimited plot data written by :mod:`rctsynth.report` and renders
figures next to it: per-column ECDF and density comparisons, category
proportion bars, and box plots of the per-run similarity scores.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

REAL_COLOR = "#d66ba0"
SYNTH_COLOR = "#5a8fc4"
DPI = 150

_SCORE_GROUPS = {
    "scores_univariate": ("ks_complement", "tvd_complement"),
    "scores_bivariate": ("correlation_similarity", "contingency_similarity"),
    "scores_efficacy": (
        "efficacy_precision_diff",
        "efficacy_recall_diff",
        "efficacy_f1_diff",
    ),
}


def render_report(report_dir, out_dir=None, dpi: int = DPI) -> list[Path]:
    """Render every figure the report directory has data for."""
    report_dir = Path(report_dir)
    out = Path(out_dir) if out_dir is not None else report_dir / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    plot_dir = report_dir / "plots"
    if plot_dir.is_dir():
        for path in sorted(plot_dir.glob("*_ecdf.csv")):
            written.append(_render_ecdf(path, out, dpi))
        for path in sorted(plot_dir.glob("*_hist.csv")):
            written.append(_render_hist(path, out, dpi))
        for path in sorted(plot_dir.glob("*_props.csv")):
            written.append(_render_props(path, out, dpi))
    runs_csv = report_dir / "runs.csv"
    if runs_csv.is_file():
        written.extend(_render_score_boxes(runs_csv, out, dpi))
    return written


def _read_csv(path: Path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        columns: dict[str, list[str]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, value in row.items():
                columns[name].append(value)
    return columns


def _render_ecdf(path: Path, out: Path, dpi: int) -> Path:
    data = _read_csv(path)
    x = [float(v) for v in data["x"]]
    name = path.stem.removesuffix("_ecdf")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(x, [float(v) for v in data["real_cdf"]], where="post",
            color=REAL_COLOR, label="real")
    ax.step(x, [float(v) for v in data["synth_cdf"]], where="post",
            color=SYNTH_COLOR, label="synthetic")
    ax.set_xlabel(name)
    ax.set_ylabel("empirical CDF")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = out / f"{name}_ecdf.png"
    fig.savefig(target, dpi=dpi)
    plt.close(fig)
    return target


def _render_hist(path: Path, out: Path, dpi: int) -> Path:
    data = _read_csv(path)
    left = [float(v) for v in data["bin_left"]]
    right = [float(v) for v in data["bin_right"]]
    edges = left + [right[-1]]
    name = path.stem.removesuffix("_hist")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.stairs([float(v) for v in data["real_density"]], edges,
              fill=True, alpha=0.45, color=REAL_COLOR, label="real")
    ax.stairs([float(v) for v in data["synth_density"]], edges,
              fill=True, alpha=0.45, color=SYNTH_COLOR, label="synthetic")
    ax.set_xlabel(name)
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = out / f"{name}_density.png"
    fig.savefig(target, dpi=dpi)
    plt.close(fig)
    return target


def _render_props(path: Path, out: Path, dpi: int) -> Path:
    data = _read_csv(path)
    categories = data["category"]
    real = [float(v) for v in data["real_prop"]]
    synth = [float(v) for v in data["synth_prop"]]
    name = path.stem.removesuffix("_props")
    positions = range(len(categories))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    width = 0.38
    ax.bar([p - width / 2 for p in positions], real, width,
           color=REAL_COLOR, label="real")
    ax.bar([p + width / 2 for p in positions], synth, width,
           color=SYNTH_COLOR, label="synthetic")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(categories, rotation=20, ha="right")
    ax.set_xlabel(name)
    ax.set_ylabel("proportion")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = out / f"{name}_props.png"
    fig.savefig(target, dpi=dpi)
    plt.close(fig)
    return target


def _render_score_boxes(runs_csv: Path, out: Path, dpi: int) -> list[Path]:
    by_metric: dict[str, list[float]] = defaultdict(list)
    with open(runs_csv, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            value = float(row["value"])
            if value == value:  # skip NaN relative differences
                by_metric[row["metric"]].append(value)
    written = []
    for stem, metrics in _SCORE_GROUPS.items():
        present = [m for m in metrics if by_metric.get(m)]
        if not present:
            continue
        fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(present), 3.8))
        ax.boxplot([by_metric[m] for m in present], tick_labels=present)
        if stem == "scores_efficacy":
            ax.axhline(0.0, color="grey", linewidth=0.8, linestyle="--")
        ax.set_ylabel("score")
        ax.tick_params(axis="x", rotation=15)
        fig.tight_layout()
        target = out / f"{stem}.png"
        fig.savefig(target, dpi=dpi)
        plt.close(fig)
        written.append(target)
    return written
