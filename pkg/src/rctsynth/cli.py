"""Command-line interface.

Subcommands: ``generate`` one synthetic table, ``evaluate`` a synthetic table
against the real one, ``simulate`` repeated generate-and-score runs,
``reference`` to emit the bundled simulated dataset, and ``report`` to render
figures from a stored report directory.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from .dataset import load_csv, write_csv
from .errors import SynthesisError
from .metrics import score_tables
from .pipeline import (
    config_to_dict,
    override_strategy,
    parse_config,
    run_pipeline,
    simulate,
)
from .regression import STRATEGY_ALIASES
from .reference import generate_reference_dataset, reference_config
from .report import emit_report


def _load_config(config_path, strategy, log_preprocess, seed, runs):
    config = parse_config(config_path)
    if strategy is not None:
        config = override_strategy(config, STRATEGY_ALIASES[strategy])
    if log_preprocess is not None:
        config = replace(config, preprocess_log=log_preprocess)
    if seed is not None:
        config = replace(config, base_seed=seed)
    if runs is not None:
        config = replace(config, runs=runs)
    return config


strategy_option = click.option(
    "--strategy",
    type=click.Choice(sorted(STRATEGY_ALIASES)),
    default=None,
    help="Override the randomness strategy of every continuous regression "
    "stage: a = gaussian noise at the residual spread, b = draw from the "
    "residual pool, c = pool draw redrawn until it clears the bound.",
)
log_option = click.option(
    "--log-preprocess/--no-log-preprocess",
    default=None,
    help="Natural-log transform flagged columns before fitting and invert after.",
)


@click.group()
def main():
    """Sequential synthetic trial data: vine-copula baselines, regression
    execution models, fidelity metrics."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("real_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Where to write the synthetic CSV.")
@click.option("--seed", type=int, default=None, help="Override the config base seed.")
@strategy_option
@log_option
def generate(config_path, real_csv, out, seed, strategy, log_preprocess):
    """Fit the pipeline on REAL_CSV and write one synthetic table."""
    config = _load_config(config_path, strategy, log_preprocess, seed, None)
    real = load_csv(real_csv, config.schema)
    synth = run_pipeline(config, real, config.base_seed)
    write_csv(synth, out)
    click.echo(f"wrote {synth.n_rows} synthetic rows to {out}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("real_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("synth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Report directory.")
@click.option("--seed", type=int, default=None, help="Override the config base seed.")
@click.option("--figures/--no-figures", default=True,
              help="Render matplotlib figures next to the data files.")
def evaluate(config_path, real_csv, synth_csv, out, seed, figures):
    """Score SYNTH_CSV against REAL_CSV and write a report."""
    config = _load_config(config_path, None, None, seed, None)
    real = load_csv(real_csv, config.schema)
    synth = load_csv(synth_csv, config.schema)
    report = score_tables(real, synth, config.metrics, seed=config.base_seed, run_id=0)
    emit_report([report], out, real=real, synth=synth)
    if figures:
        from .plots import render_report

        render_report(out)
    click.echo(f"wrote report to {out}")


@main.command(name="simulate")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("real_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Report directory.")
@click.option("--runs", type=int, default=None, help="Override the config run count.")
@click.option("--seed", type=int, default=None, help="Override the config base seed.")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Concurrent run workers.")
@click.option("--figures/--no-figures", default=True,
              help="Render matplotlib figures next to the data files.")
@strategy_option
@log_option
def simulate_cmd(config_path, real_csv, out, runs, seed, workers, figures,
                 strategy, log_preprocess):
    """Repeat fit-generate-score runs on REAL_CSV and aggregate the scores."""
    config = _load_config(config_path, strategy, log_preprocess, seed, runs)
    real = load_csv(real_csv, config.schema)
    result = simulate(config, real, workers=workers)
    emit_report(
        result.reports,
        out,
        real=real,
        synth=result.example_synth,
        summary=result.summary,
        failures=result.failures,
        total_seconds=result.total_seconds,
    )
    if figures:
        from .plots import render_report

        render_report(out)
    click.echo(
        f"{len(result.reports)} runs in {result.total_seconds:.1f}s "
        f"({len(result.failures)} failed); report in {out}"
    )


@main.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Where to write the reference CSV.")
@click.option("--config-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the matching pipeline config JSON.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--n", type=int, default=2139, show_default=True)
def reference(out, config_out, seed, n):
    """Emit the bundled simulated trial dataset (and optionally its config)."""
    table = generate_reference_dataset(seed=seed, n=n)
    write_csv(table, out)
    click.echo(f"wrote {table.n_rows} reference rows to {out}")
    if config_out:
        with open(config_out, "w", encoding="utf-8") as handle:
            json.dump(config_to_dict(reference_config()), handle, indent=2)
            handle.write("\n")
        click.echo(f"wrote pipeline config to {config_out}")


@main.command(name="report")
@click.argument("report_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Figure directory (default: <report_dir>/figures).")
def report_cmd(report_dir, out):
    """Render matplotlib figures from a stored report directory."""
    from .plots import render_report

    written = render_report(report_dir, out)
    click.echo(f"rendered {len(written)} figures")


def entrypoint():
    try:
        main(standalone_mode=True)
    except SynthesisError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
