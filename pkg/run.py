"""
Main entry point for the T^(r)-free process laboratory.

This module exposes the click commands that run seeded ensembles, the independence
scaling probe and a printout of the trajectory model for a given (n, r).
"""
import json
import logging
import sys

import click

from trfree import create_lab
from trfree.exceptions import ConfigError
from trfree.models import Mode, OutputFormat
from trfree.schemas import probe_rows_schema, trajectory_model_schema
from trfree.services.ensemble import load_run_config, prepare_output, write_table

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_ORACLE_FAILURE = 2

CONSTANT_FLAGS = ("zeta", "gamma", "epsilon", "W", "kappa")


def _read_config_file(path):
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config file {path!r}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path!r} must hold a JSON object")
    return data


def _merge(file_data, flags):
    """Overlay explicitly given flags on the config file; constants merge field by field."""
    data = dict(file_data)
    constants = dict(data.get("constants") or {})
    for name, value in flags.items():
        if value is None:
            continue
        if name in CONSTANT_FLAGS:
            constants[name] = value
        else:
            data[name] = value
    if constants:
        data["constants"] = constants
    return data


@click.group()
@click.option("--config-name", default=None, help="Settings class: development, testing, production.")
@click.pass_context
def cli(ctx, config_name):
    """Random greedy T^(r)-free process laboratory."""
    ctx.obj = create_lab(config_name)


@cli.command("simulate")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="JSON RunConfig file.")
@click.option("--n", type=int)
@click.option("--r", type=int)
@click.option("--mode", type=click.Choice([mode.value for mode in Mode]))
@click.option("--master-seed", type=int)
@click.option("--runs", type=int)
@click.option("--zeta", type=float)
@click.option("--gamma", type=float)
@click.option("--epsilon", type=float)
@click.option("--W", "W", type=float)
@click.option("--kappa", type=float)
@click.option("--checkpoint-every", type=int)
@click.option("--ce-sample-size", type=int)
@click.option("--tracked-A-count", "tracked_A_count", type=int)
@click.option("--tracked-pair-count", type=int)
@click.option("--i-max-override", type=int)
@click.option("--drive-to-termination/--no-drive-to-termination", default=None)
@click.option("--output", "output_path")
@click.option("--format", "format", type=click.Choice([fmt.value for fmt in OutputFormat]))
@click.option("--pattern-size", type=int)
@click.option("--pattern-step", type=int)
@click.option("--oracle-checkpoints", type=int)
@click.option("--mis-node-budget", type=int)
@click.pass_obj
def simulate_command(lab, config_file, **flags):
    """Run a seeded ensemble and write its manifest and tables."""
    try:
        data = _merge(_read_config_file(config_file) if config_file else {}, flags)
        config = load_run_config(data)
        result = lab.run_ensemble(config)
    except ConfigError as err:
        logging.error("%s", err)
        click.echo(f"Configuration error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    click.echo(f"Wrote {', '.join(result.files)} to {config.output_path}")
    if result.exit_code:
        click.echo("Oracle test failed.", err=True)
        sys.exit(EXIT_ORACLE_FAILURE)
    sys.exit(EXIT_OK)


@cli.command("probe")
@click.option("--r", type=int, required=True)
@click.option("--n-grid", required=True, help="Comma separated vertex counts, e.g. 15,20,25,30.")
@click.option("--runs", type=int, default=30, show_default=True)
@click.option("--master-seed", type=int, default=0, show_default=True)
@click.option("--drive-to-termination", is_flag=True)
@click.option("--output", "output_path", default="out", show_default=True)
@click.option("--format", "format", type=click.Choice([fmt.value for fmt in OutputFormat]), default="csv")
@click.pass_obj
def probe_command(lab, r, n_grid, runs, master_seed, drive_to_termination, output_path, format):
    """Measure alpha against (n log n)^(1/r) across a grid of n."""
    try:
        grid = [int(part) for part in n_grid.split(",") if part.strip()]
        if not grid or min(grid) < r or r < 2 or runs < 1:
            raise ConfigError("need r >= 2, runs >= 1 and every n in the grid at least r")
        prepare_output(output_path)
    except (ValueError, ConfigError) as err:
        click.echo(f"Configuration error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    rows = lab.scaling_probe(
        grid, r, runs, master_seed, drive_to_termination=drive_to_termination
    )
    name = write_table(output_path, "probe", probe_rows_schema, rows, OutputFormat(format))
    for row in rows:
        click.echo(f"n={row.n:4d}  alpha={row.alpha_mean:8.3f}  ratio={row.ratio:.4f}")
    click.echo(f"Wrote {name} to {output_path}")


@cli.command("show-model")
@click.option("--n", type=int, required=True)
@click.option("--r", type=int, required=True)
@click.pass_obj
def show_model_command(lab, n, r):
    """Print the derived scaling quantities for (n, r)."""
    from trfree.services.combinatorics import scaling

    try:
        model = scaling(n, r)
    except ValueError as err:
        click.echo(f"Configuration error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    click.echo(json.dumps(trajectory_model_schema.dump(model), indent=2))


if __name__ == "__main__":
    cli()
