"""
Command-line driver.

    python -m experiments.cli run path/to/config.yaml [--seed S] [--threads T] [--out DIR]
    python -m experiments.cli preset om1d --override sampler.count=20000
    python -m experiments.cli list-presets

Exit codes: 0 success, 1 configuration error, 2 finished with degenerate
rows, 3 any other failure.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional

import typer
from loguru import logger

from core.config import settings
from core.errors import ConfigError, LaboratoryError
from experiments.config import ExperimentConfig, load_config
from experiments.presets import build_preset, list_presets
from experiments.run_experiment import run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DEGENERATE = 2
EXIT_FAILURE = 3

app = typer.Typer(add_completion=False, help="Small-ball probability laboratory for Phi^4 and P(Phi)_2 measures.")


def configure_logging(level: str | None = None):
    logger.remove()
    logger.add(sys.stderr, level=level or settings.PHILAB_LOG_LEVEL)


def _execute(load, seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> int:
    configure_logging()
    try:
        config: ExperimentConfig = load()
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    try:
        result = run(config, seed=seed, threads=threads, out=out)
    except LaboratoryError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except Exception:
        logger.exception(f"Experiment {config.name} failed")
        return EXIT_FAILURE
    if result.degenerate_count:
        logger.warning(f"{result.degenerate_count} degenerate rows in {result.results_path}")
        return EXIT_DEGENERATE
    return EXIT_OK


@app.command("run")
def run_command(
    config_file: Path = typer.Argument(..., help="Experiment description (.yaml, .yml or .json)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed; overrides the config"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Worker threads"),
    out: Optional[Path] = typer.Option(None, "--out", help="Results directory"),
):
    """Run an experiment description file."""
    raise typer.Exit(_execute(lambda: load_config(config_file), seed, threads, out))


@app.command("preset")
def preset_command(
    preset_id: str = typer.Argument(..., help="Preset id, see list-presets"),
    override: List[str] = typer.Option([], "--override", help="Dotted key=value, value read as YAML"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed; overrides the preset"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Worker threads"),
    out: Optional[Path] = typer.Option(None, "--out", help="Results directory"),
):
    """Run a built-in experiment."""
    raise typer.Exit(_execute(lambda: build_preset(preset_id, override), seed, threads, out))


@app.command("list-presets")
def list_presets_command():
    """Print the built-in experiment ids."""
    for preset_id in list_presets():
        typer.echo(preset_id)


if __name__ == "__main__":
    app()
