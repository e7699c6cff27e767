from pathlib import Path
from typing import Any, List, Optional

from loguru import logger
import typer

from pcosync.config import GRAPHS_DIR
from pcosync.core import PcoError
from pcosync.experiments.runners import CommandResult, run_spec
from pcosync.experiments.spec import (
    GRAPH_BUILDERS,
    ConfigParseError,
    ConfigValidationError,
    ExperimentSpec,
    apply_overrides,
    load_config,
)
from pcosync.graphs import DirectedGraph, write_graph, write_sequence

app = typer.Typer(help="Pulse-coupled oscillator synchronization experiments.")

EXIT_FAILED = 1
EXIT_CONFIG = 2

ConfigOption = typer.Option(None, "--config", "-c", help="JSON experiment file.")
OutputOption = typer.Option(None, "--output-dir", "-o", help="Directory for the artifacts.")


def _execute(command: str, config: Optional[Path], overrides: dict[str, Any]) -> CommandResult:
    """Load the config, apply flags (flag wins), run ``command`` and map failures to exit codes."""
    try:
        spec = load_config(config) if config is not None else ExperimentSpec()
        spec = apply_overrides(spec, {**overrides, "command": command})
        result = run_spec(spec)
    except (ConfigParseError, ConfigValidationError, PcoError, OSError) as e:
        logger.error(f"{command}: {e}")
        raise typer.Exit(code=EXIT_CONFIG)
    if not result.passed:
        raise typer.Exit(code=EXIT_FAILED)
    return result


@app.command()
def run(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    prc: Optional[str] = typer.Option(None, help="Preset name: sr, sf, s2-default, ms, ..."),
    tau: Optional[float] = None,
    horizon: Optional[float] = None,
    seed: Optional[int] = None,
    freq_error: Optional[float] = None,
    delay_jitter: Optional[float] = None,
    quiescent: Optional[float] = None,
    self_loop: Optional[bool] = typer.Option(None, "--self-loop/--no-self-loop"),
    sleep_schedule: Optional[bool] = typer.Option(None, "--sleep-schedule/--no-sleep-schedule"),
):
    """Simulate once and write firings.csv, range.csv and summary.json."""
    _execute(
        "run",
        config,
        {
            "output_dir": str(output_dir) if output_dir else None,
            "prc": prc,
            "tau": tau,
            "horizon": horizon,
            "seed": seed,
            "noise.freq_error": freq_error,
            "noise.delay_jitter": delay_jitter,
            "variant.quiescent": quiescent,
            "variant.self_loop": self_loop,
            "variant.sleep_schedule": sleep_schedule,
        },
    )


@app.command()
def basin(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    trials: Optional[int] = None,
    master_seed: Optional[int] = None,
    width: Optional[float] = typer.Option(None, help="Initial window width; uniform if unset."),
    parallel: Optional[bool] = typer.Option(None, "--parallel/--serial"),
):
    """Monte Carlo estimate of the fraction of initial conditions that synchronize."""
    overrides: dict[str, Any] = {
        "output_dir": str(output_dir) if output_dir else None,
        "trials": trials,
        "master_seed": master_seed,
        "parallel": parallel,
    }
    if width is not None:
        overrides.update({"init.mode": "window", "init.width": width})
    _execute("basin", config, overrides)


@app.command()
def sweep(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    parameter: Optional[str] = typer.Option(None, help="tau, quiescent, freq_error, ..."),
    values: Optional[List[float]] = typer.Option(None, "--value", help="Repeat for each value."),
    trials: Optional[int] = None,
    master_seed: Optional[int] = None,
    parallel: Optional[bool] = typer.Option(None, "--parallel/--serial"),
):
    """Basin estimates over the values of one parameter, written to sweep.csv."""
    _execute(
        "sweep",
        config,
        {
            "output_dir": str(output_dir) if output_dir else None,
            "sweep.parameter": parameter,
            "sweep.values": values or None,
            "trials": trials,
            "master_seed": master_seed,
            "parallel": parallel,
        },
    )


@app.command("oracle-check")
def oracle_check(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    cases: Optional[int] = None,
    master_seed: Optional[int] = None,
    map_tau_offset: Optional[float] = typer.Option(
        None, help="Shift tau in the maps only (negative control)."
    ),
):
    """Compare engine windows with the closed-form maps. Exit 1 on any mismatch."""
    result = _execute(
        "oracle-check",
        config,
        {
            "output_dir": str(output_dir) if output_dir else None,
            "oracle.cases": cases,
            "master_seed": master_seed,
            "oracle.map_tau_offset": map_tau_offset,
        },
    )
    logger.info(f"max deviation: {result.summary['max_deviation']}")


@app.command()
def figure2(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    depth: Optional[int] = None,
    trials: Optional[int] = None,
    master_seed: Optional[int] = None,
    parallel: Optional[bool] = typer.Option(None, "--parallel/--serial"),
):
    """Basin comparison of limited resetting against SR and SF on the tree-plus-triangle."""
    _execute(
        "figure2",
        config,
        {
            "output_dir": str(output_dir) if output_dir else None,
            "figure2.depth": depth,
            "figure2.trials": trials,
            "master_seed": master_seed,
            "parallel": parallel,
        },
    )


@app.command()
def figure3(
    config: Optional[Path] = ConfigOption,
    output_dir: Optional[Path] = OutputOption,
    n: Optional[int] = None,
    seeds: Optional[int] = None,
    horizon: Optional[float] = None,
    master_seed: Optional[int] = None,
):
    """Sync-error series on a random geometric graph, clean and noisy."""
    _execute(
        "figure3",
        config,
        {
            "output_dir": str(output_dir) if output_dir else None,
            "figure3.n": n,
            "figure3.seeds": seeds,
            "horizon": horizon,
            "master_seed": master_seed,
        },
    )


def _parse_params(params: list[str]) -> dict[str, Any]:
    parsed: dict[str, Any] = {}
    for item in params:
        key, sep, value = item.partition("=")
        if not sep:
            raise typer.BadParameter(f"expected key=value, got {item!r}")
        if value.lower() in ("true", "false"):
            parsed[key] = value.lower() == "true"
            continue
        try:
            parsed[key] = int(value)
        except ValueError:
            try:
                parsed[key] = float(value)
            except ValueError:
                parsed[key] = value
    return parsed


@app.command("gen-graph")
def gen_graph(
    generator: str = typer.Argument(..., help="Generator name, e.g. random-geometric."),
    param: List[str] = typer.Option([], "--param", "-p", help="key=value, repeatable."),
    seed: int = 0,
    windows: int = typer.Option(10, help="Windows to write for graph sequences."),
    output: Optional[Path] = typer.Option(None, "--output", "-o"),
):
    """Write a generated graph (edge list) or sequence (directory with manifest.json)."""
    if generator not in GRAPH_BUILDERS:
        logger.error(f"unknown generator {generator!r}; choose from {', '.join(GRAPH_BUILDERS)}")
        raise typer.Exit(code=EXIT_CONFIG)
    try:
        graphs = GRAPH_BUILDERS[generator](_parse_params(param), seed)
    except (ConfigValidationError, PcoError) as e:
        logger.error(f"gen-graph: {e}")
        raise typer.Exit(code=EXIT_CONFIG)
    if isinstance(graphs, DirectedGraph):
        path = write_graph(graphs, output or GRAPHS_DIR / f"{generator}-{seed}.txt")
    else:
        path = write_sequence(graphs, output or GRAPHS_DIR / f"{generator}-{seed}", windows)
    logger.success(f"Wrote {path}")


if __name__ == "__main__":
    app()
