"""Report files: aggregated summary, long-format scores, plot-ready data.

``runs.csv`` is the long-format score table (run_id, metric, target, value)
and is byte-deterministic for a fixed configuration and seed. Plot data files
hold real-versus-synthetic ECDF, histogram and category-proportion
coordinates for one chosen run, ready for external plotting or for the
bundled matplotlib rendering in :mod:`rctsynth.plots`.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dataset import CONTINUOUS, DataTable
from .errors import SynthesisError
from .metrics import aggregate_runs

HIST_BINS = 30


def emit_report(
    reports,
    out_dir,
    real: DataTable | None = None,
    synth: DataTable | None = None,
    summary: dict | None = None,
    failures=(),
    total_seconds: float | None = None,
) -> list[Path]:
    """Write summary.json, runs.csv and per-column plot data into a directory."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SynthesisError(f"cannot create report directory {out}: {exc}") from exc
    reports = sorted(reports, key=lambda r: r.run_id)
    if summary is None:
        summary = aggregate_runs(reports)
    written = []

    runs_path = out / "runs.csv"
    with open(runs_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run_id", "metric", "target", "value"])
        for report in reports:
            for metric, target, value in report.rows():
                writer.writerow([report.run_id, metric, target, repr(float(value))])
    written.append(runs_path)

    summary_path = out / "summary.json"
    doc = {
        "runs": len(reports),
        "failures": [{"run_id": rid, "error": msg} for rid, msg in failures],
        "total_seconds": total_seconds,
        "metrics": [
            {"metric": metric, "target": target, **stats}
            for (metric, target), stats in sorted(summary.items())
        ],
    }
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")
    written.append(summary_path)

    if real is not None and synth is not None:
        written.extend(write_plot_data(real, synth, out / "plots"))
    return written


def write_plot_data(real: DataTable, synth: DataTable, plot_dir) -> list[Path]:
    """Per-column real-versus-synthetic coordinates for plotting."""
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for col in real.schema:
        real_obs = real.values(col.name)[~real.missing(col.name)]
        synth_obs = synth.values(col.name)[~synth.missing(col.name)]
        if col.kind == CONTINUOUS:
            written.append(_write_ecdf(plot_dir, col.name, real_obs, synth_obs))
            written.append(_write_hist(plot_dir, col.name, real_obs, synth_obs))
        else:
            written.append(
                _write_props(plot_dir, col.name, col.categories, real_obs, synth_obs)
            )
    return written


def _write_ecdf(plot_dir: Path, name: str, real_obs, synth_obs) -> Path:
    xs = np.unique(np.concatenate([real_obs, synth_obs]))
    real_sorted = np.sort(real_obs)
    synth_sorted = np.sort(synth_obs)
    real_cdf = np.searchsorted(real_sorted, xs, side="right") / real_sorted.size
    synth_cdf = np.searchsorted(synth_sorted, xs, side="right") / synth_sorted.size
    path = plot_dir / f"{name}_ecdf.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "real_cdf", "synth_cdf"])
        for x, rc, sc in zip(xs, real_cdf, synth_cdf):
            writer.writerow([repr(float(x)), repr(float(rc)), repr(float(sc))])
    return path


def _write_hist(plot_dir: Path, name: str, real_obs, synth_obs) -> Path:
    lo = float(min(real_obs.min(), synth_obs.min()))
    hi = float(max(real_obs.max(), synth_obs.max()))
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    real_density, _ = np.histogram(real_obs, bins=edges, density=True)
    synth_density, _ = np.histogram(synth_obs, bins=edges, density=True)
    path = plot_dir / f"{name}_hist.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_left", "bin_right", "real_density", "synth_density"])
        for k in range(HIST_BINS):
            writer.writerow(
                [
                    repr(float(edges[k])),
                    repr(float(edges[k + 1])),
                    repr(float(real_density[k])),
                    repr(float(synth_density[k])),
                ]
            )
    return path


def _write_props(plot_dir: Path, name: str, categories, real_obs, synth_obs) -> Path:
    real_counts = np.bincount(real_obs.astype(np.int64), minlength=len(categories))
    synth_counts = np.bincount(synth_obs.astype(np.int64), minlength=len(categories))
    path = plot_dir / f"{name}_props.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["category", "real_prop", "synth_prop"])
        for k, category in enumerate(categories):
            writer.writerow(
                [
                    category,
                    repr(real_counts[k] / max(real_counts.sum(), 1)),
                    repr(synth_counts[k] / max(synth_counts.sum(), 1)),
                ]
            )
    return path
