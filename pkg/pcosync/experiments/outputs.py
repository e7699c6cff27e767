"""Artifact writers. Every file is a pure function of its inputs: no timestamps,
sorted JSON keys, floats written with ``repr``."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

from loguru import logger

from pcosync.analysis import BasinEstimate
from pcosync.engine import Trace


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"wrote {path}")
    return path


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    logger.debug(f"wrote {path}")
    return path


def write_manifest(output_dir: Path, command: str, config: dict, master_seed: int, files) -> Path:
    """Echo of the resolved config next to the files a command produced."""
    return write_json(
        Path(output_dir) / "manifest.json",
        {
            "command": command,
            "config": config,
            "master_seed": master_seed,
            "files": sorted(Path(f).name for f in files),
        },
    )


def write_firings(path: Path, trace: Trace) -> Path:
    return write_csv(path, ("time", "node"), trace.firings)


def write_range_series(path: Path, series: Sequence[tuple[float, float]]) -> Path:
    return write_csv(path, ("time", "rho"), series)


def basin_row(label: Any, estimate: BasinEstimate) -> tuple:
    return (
        label,
        estimate.trials,
        estimate.converged_count,
        estimate.fraction,
        estimate.ci95_halfwidth,
    )


def write_basin_table(path: Path, rows: Sequence[tuple[Any, BasinEstimate]], label: str) -> Path:
    """One row per swept value: (label, trials, converged, fraction, ci95)."""
    return write_csv(
        path,
        (label, "trials", "converged", "fraction", "ci95"),
        [basin_row(value, est) for value, est in rows],
    )


def basin_payload(estimate: BasinEstimate) -> dict:
    return {
        "trials": estimate.trials,
        "converged": estimate.converged_count,
        "fraction": estimate.fraction,
        "ci95": estimate.ci95_halfwidth,
        "errors": estimate.errors,
    }
