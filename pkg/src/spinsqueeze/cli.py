"""Command-line entry point: ``spinsqueeze <subcommand>``.

Exit codes: 0 full success, 2 some grid points failed, 1 configuration error.
"""

from __future__ import annotations

import json
import logging
import sys

import click

from .config import ConfigError, load_config, parse_grid
from .experiments import fit_csv, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="INI config file.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed.")
@click.option("--workers", type=click.IntRange(1), default=None, help="Worker processes.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="Record format.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, config_path, seed, workers, out, fmt, verbose):
    """Spin-squeezing experiments: ground-state and time scaling, noise and dissipation."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"path": config_path, "master_seed": seed, "workers": workers, "out": out, "format": fmt}


def _run(ctx, experiment, **extra):
    overrides = {k: v for k, v in {**ctx.obj, **extra}.items() if k != "path" and v is not None}
    overrides["experiment"] = experiment
    try:
        cfg = load_config(ctx.obj["path"], **overrides)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    outcome = run_experiment(cfg)
    click.echo(json.dumps({
        "experiment": experiment,
        "records": len(outcome.records),
        "failed": outcome.failures,
        "out": str(outcome.out_dir),
        "fit": outcome.summary.get("fit"),
    }, default=str))
    sys.exit(EXIT_OK if outcome.complete else EXIT_PARTIAL)


def _grid(text):
    if text is None:
        return None
    try:
        return parse_grid(text)
    except ConfigError as exc:
        raise click.BadParameter(str(exc)) from None


grid_option = click.option("--n-grid", default=None, help='Atom numbers, "30:150:10" or "30,50,100".')


@main.command("ground-scaling")
@grid_option
@click.pass_context
def ground_scaling(ctx, n_grid):
    """Ground-state squeezing at the target signal versus N, with a power-law fit."""
    _run(ctx, "ground-scaling", n_grid=_grid(n_grid))


@main.command("time-scaling")
@click.option("--protocol", type=click.Choice(["adiabatic", "crab"]), required=True)
@click.option("--full", is_flag=True, default=None, help="Allow adiabatic runs above N=100.")
@grid_option
@click.pass_context
def time_scaling(ctx, protocol, full, n_grid):
    """Preparation time versus N for the linear ramp or the optimised control."""
    _run(ctx, "time-scaling", n_grid=_grid(n_grid), full=full or None, protocol={"kind": protocol})


@main.command("noise-sweep")
@grid_option
@click.pass_context
def noise_sweep(ctx, n_grid):
    """Telegraph-noise ensembles for both protocols at each N."""
    _run(ctx, "noise-sweep", n_grid=_grid(n_grid))


@main.command("coop-sweep")
@click.pass_context
def coop_sweep(ctx):
    """Final squeezing versus cooperativity under interaction-driven decay."""
    _run(ctx, "coop-sweep")


@main.command("single-run")
@click.option("-n", "--atoms", type=click.IntRange(2), default=None, help="Atom number (default: first of n_grid).")
@click.pass_context
def single_run(ctx, atoms):
    """Adiabatic versus optimised protocol at one N, noiseless and noisy."""
    _run(ctx, "single-run", n_grid=(atoms,) if atoms else None)


@main.command("fit")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--x", "x_col", default="N", show_default=True)
@click.option("--y", "y_col", default=None, help="Defaults to xi2 or T, whichever is present.")
def fit(csv_path, x_col, y_col):
    """Power-law fit y = A x^B of two columns of a results CSV."""
    try:
        result = fit_csv(csv_path, x_col, y_col)
    except ValueError as exc:
        click.echo(f"fit error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(json.dumps(result))


def run(argv=None) -> int:
    """Console entry: bad arguments exit 1 like config errors (click alone uses 2)."""
    try:
        main.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
