"""Bodies of the experiment commands. Each one resolves an ExperimentSpec,
runs it and writes its artifacts plus a manifest into the output directory."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
from pathlib import Path
from typing import Any, Optional

from loguru import logger
import numpy as np
from tqdm import tqdm

from pcosync.analysis import (
    basin_monte_carlo,
    convergence_report,
    convergence_time_bound,
    parameter_sweep,
    rho0,
    sleep_schedule,
    steady_state_error,
    sync_error_series,
    trial_seeds,
)
from pcosync.config import ORACLE_TOL, REPORTS_DIR, WORKERS
from pcosync.core import (
    NotS2Error,
    PreconditionViolated,
    StrongFire,
    StrongReset,
    make_preset,
    validate_s2,
)
from pcosync.engine import (
    ALIGN_EPS,
    InitSpec,
    SimConfig,
    Trace,
    first_fire_times,
    run_window_map,
    simulate,
)
from pcosync.experiments.outputs import (
    basin_payload,
    write_basin_table,
    write_csv,
    write_firings,
    write_json,
    write_manifest,
    write_range_series,
)
from pcosync.experiments.spec import (
    ExperimentSpec,
    build_init,
    build_prc,
    build_sim_config,
)
from pcosync.graphs import (
    DirectedGraph,
    coverage_depth,
    gen_binary_tree_triangle,
    gen_random_geometric,
    max_coverage_depth,
    random_aperiodic_digraph,
    random_connected_undirected,
)
from pcosync.maps import sf_next_fire_times, sr_time_map, window_frame


@dataclass
class CommandResult:
    output_dir: Path
    files: list[Path] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    passed: bool = True


def output_dir_for(spec: ExperimentSpec) -> Path:
    out = spec.output_dir if spec.output_dir is not None else REPORTS_DIR / spec.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(spec: ExperimentSpec, result: CommandResult) -> CommandResult:
    config = spec.model_dump(mode="json")
    config.pop("output_dir", None)
    result.files.append(
        write_manifest(
            result.output_dir, spec.command, config, spec.resolved_master_seed, result.files
        )
    )
    return result


def _coverage(config: SimConfig) -> Optional[int]:
    seq = config.sequence
    if len(seq.graphs) == 1 and seq.generator is None:
        return coverage_depth(seq)
    windows = max(1, math.ceil(config.horizon / config.window))
    return max_coverage_depth(seq, windows)


# ---- run --------------------------------------------------------------------


def run_summary(config: SimConfig, trace: Trace, d: Optional[int]) -> dict[str, Any]:
    """Summary fields for one trace, with the convergence-time comparison when the
    curve is strong type II."""
    summary: dict[str, Any] = {
        "converged_at": trace.converged_at,
        "end_time": trace.end_time,
        "events_processed": trace.events_processed,
        "n": trace.n,
        "rho_initial": trace.rho_initial,
        "seed": trace.seed,
        "d": d,
        "s2": False,
    }
    try:
        params = validate_s2(config.prc, config.tau)
    except NotS2Error as e:
        logger.debug(f"no convergence bound: {e}")
        return summary
    report = convergence_report(config, trace, d, params.kappa, params.B0, params.B1)
    summary.update(
        s2=True,
        kappa=params.kappa,
        B0=params.B0,
        B1=params.B1,
        basin_ok=report.basin_ok,
        t_star=report.t_star,
    )
    if report.t_star is not None:
        summary["within_t_star_plus_window"] = (
            report.time is not None and report.time <= report.t_star + config.window
        )
        summary["block_bound"] = convergence_time_bound(
            report.rho_initial, d, config.tau, params.kappa
        )
    return summary


def cmd_run(spec: ExperimentSpec) -> CommandResult:
    out = output_dir_for(spec)
    config = build_sim_config(spec)
    d = _coverage(config)
    if spec.variant.sleep_schedule:
        schedule = tuple(sleep_schedule(spec.tau, d or 1))
        config = replace(config, schedule=schedule)
        logger.info(f"sleep schedule with {len(schedule)} steps (d={d})")
    logger.info(f"Running {spec.name}: n={config.sequence.n} tau={spec.tau} seed={spec.seed}")
    trace = simulate(config)
    result = CommandResult(out)
    result.files.append(write_firings(out / "firings.csv", trace))
    result.files.append(write_range_series(out / "range.csv", sync_error_series(trace)))
    result.summary = run_summary(config, trace, d)
    result.files.append(write_json(out / "summary.json", result.summary))
    logger.success(f"Run complete: converged_at={trace.converged_at}")
    return _finish(spec, result)


# ---- basin and sweep --------------------------------------------------------


def cmd_basin(spec: ExperimentSpec) -> CommandResult:
    out = output_dir_for(spec)
    config = build_sim_config(spec)
    estimate = basin_monte_carlo(
        config,
        build_init(spec.init),
        spec.trials,
        parallel=spec.parallel,
        workers=WORKERS,
        master_seed=spec.resolved_master_seed,
    )
    result = CommandResult(out, summary=basin_payload(estimate))
    result.files.append(write_json(out / "basin.json", result.summary))
    logger.success(f"Basin estimate complete: fraction={estimate.fraction:.3f}")
    return _finish(spec, result)


def cmd_sweep(spec: ExperimentSpec) -> CommandResult:
    """Basin estimate per value of one parameter. The curve is built once for ``spec.tau``."""
    out = output_dir_for(spec)
    config = build_sim_config(spec)
    parameter = spec.sweep.parameter
    table = parameter_sweep(
        config,
        parameter,
        spec.sweep.values,
        spec.trials,
        init_sampler=build_init(spec.init),
        parallel=spec.parallel,
        workers=WORKERS,
        master_seed=spec.resolved_master_seed,
    )
    result = CommandResult(out)
    result.summary = {"parameter": parameter, "rows": [[v, basin_payload(e)] for v, e in table]}
    result.files.append(write_basin_table(out / "sweep.csv", table, parameter))
    logger.success(f"Sweep over {parameter} complete: {len(table)} values")
    return _finish(spec, result)


# ---- oracle check -----------------------------------------------------------


def _circular_gap(a: np.ndarray, b: np.ndarray) -> float:
    d = np.mod(np.abs(np.asarray(a) - np.asarray(b)), 1.0)
    return float(np.max(np.minimum(d, 1.0 - d))) if d.size else 0.0


def sr_oracle_case(
    phases: np.ndarray, g: DirectedGraph, tau: float, B0: float, map_tau_offset: float = 0.0
) -> float:
    """Largest circular gap between one engine window and the strong-resetting map."""
    engine = run_window_map(phases, g, StrongReset(B0), tau)
    rotated, shift = window_frame(phases)
    expected = np.mod(sr_time_map(rotated, g, tau + map_tau_offset, B0) - shift, 1.0)
    return _circular_gap(engine, expected)


def sf_oracle_case(
    phases: np.ndarray, g: DirectedGraph, tau: float, B0: float, map_tau_offset: float = 0.0
) -> float:
    """Largest gap between engine first-fire times and the strong-firing fixed point."""
    first, _ = first_fire_times(phases, g, StrongFire(B0), tau)
    aligned, _ = window_frame(phases, delta=ALIGN_EPS)
    expected = np.asarray(sf_next_fire_times(aligned, g, tau + map_tau_offset))
    return float(np.max(np.abs(first - expected)))


def cmd_oracle_check(spec: ExperimentSpec) -> CommandResult:
    """Engine against the closed-form maps on random graphs and in-basin states."""
    out = output_dir_for(spec)
    oc = spec.oracle
    rng = np.random.default_rng(spec.resolved_master_seed)
    worst = {kind: 0.0 for kind in oc.kinds}
    rows = []
    for case in tqdm(range(oc.cases), desc="Oracle cases"):
        n = int(rng.integers(oc.n_min, oc.n_max + 1))
        tau = float(rng.choice(oc.taus))
        B0 = float(rng.uniform(2 * tau, 0.8))
        width = float(rng.uniform(0.0, 0.95 * rho0(B0, B0, tau)))
        phases = np.mod(rng.random() + width * rng.random(n), 1.0)
        gseed = int(rng.integers(2**31))
        for kind in oc.kinds:
            try:
                if kind == "sr":
                    g = random_aperiodic_digraph(n, oc.edge_p, gseed)
                    dev = sr_oracle_case(phases, g, tau, B0, oc.map_tau_offset)
                else:
                    g = random_connected_undirected(n, oc.edge_p, gseed)
                    dev = sf_oracle_case(phases, g, tau, B0, oc.map_tau_offset)
            except PreconditionViolated as e:
                logger.warning(f"case {case} ({kind}): map precondition failed: {e}")
                dev = math.inf
            worst[kind] = max(worst[kind], dev)
            rows.append((case, kind, n, tau, B0, width, dev))
    passed = all(dev <= ORACLE_TOL for dev in worst.values())
    result = CommandResult(out, passed=passed)
    result.summary = {
        "cases": oc.cases,
        "max_deviation": {k: (v if math.isfinite(v) else "inf") for k, v in worst.items()},
        "passed": passed,
        "tolerance": ORACLE_TOL,
    }
    result.files.append(
        write_csv(
            out / "oracle.csv", ("case", "kind", "n", "tau", "B0", "width", "deviation"), rows
        )
    )
    result.files.append(write_json(out / "oracle.json", result.summary))
    if passed:
        logger.success(f"Oracle check passed: max deviation {max(worst.values()):.3g}")
    else:
        logger.error(f"Oracle mismatch: {result.summary['max_deviation']}")
    return _finish(spec, result)


# ---- figures ----------------------------------------------------------------


def cmd_figure2(spec: ExperimentSpec) -> CommandResult:
    """Basin comparison of the named curves on a binary tree closed by one triangle."""
    out = output_dir_for(spec)
    f2 = spec.figure2
    g = gen_binary_tree_triangle(f2.depth)
    init = build_init(spec.init)
    rows = []
    for name in f2.presets:
        template = SimConfig(
            prc=make_preset(name, spec.tau),
            graphs=g,
            tau=spec.tau,
            init_phases=init,
            seed=spec.seed,
            horizon=spec.horizon,
            sample_interval=spec.sampling.interval,
            conv_tolerance=spec.tolerance,
        )
        logger.info(f"figure2: {name} on {g.n} nodes, {f2.trials} trials")
        estimate = basin_monte_carlo(
            template,
            init,
            f2.trials,
            parallel=spec.parallel,
            workers=WORKERS,
            master_seed=spec.resolved_master_seed,
        )
        rows.append((name, estimate))
    result = CommandResult(out)
    result.files.append(write_basin_table(out / "figure2.csv", rows, "prc"))
    by_name = dict(rows)
    summary: dict[str, Any] = {name: basin_payload(est) for name, est in rows}
    if "limited-reset" in by_name:
        lr = by_name["limited-reset"]
        for other in ("sr", "sf"):
            if other in by_name:
                gap = lr.fraction - by_name[other].fraction
                summary[f"limited_reset_minus_{other}"] = gap
                summary[f"limited_reset_exceeds_{other}_by_ci"] = gap >= lr.ci95_halfwidth
    result.summary = summary
    result.files.append(write_json(out / "figure2.json", summary))
    logger.success("figure2 complete")
    return _finish(spec, result)


def cmd_figure3(spec: ExperimentSpec) -> CommandResult:
    """Sync-error series of each curve on one random geometric graph, with a clean
    uniform delay (setting A) and with frequency and delay noise (setting B)."""
    out = output_dir_for(spec)
    f3 = spec.figure3
    g = gen_random_geometric(f3.n, f3.radius, spec.seed)
    init = InitSpec("window", f3.init_width) if f3.init_width else build_init(spec.init)
    seeds = trial_seeds(spec.resolved_master_seed, f3.seeds)
    noise = {"A": (0.0, 0.0), "B": (f3.freq_error, f3.delay_jitter)}
    result = CommandResult(out)
    summary: dict[str, Any] = {}
    for setting in f3.settings:
        freq_error, jitter = noise[setting]
        for i, prc_cfg in enumerate(f3.prcs):
            label = prc_cfg.name or f"custom{i}"
            prc = build_prc(prc_cfg, spec.tau)
            finals, floors, converged = [], [], []
            for k, seed in enumerate(tqdm(seeds, desc=f"figure3 {setting}/{label}")):
                config = SimConfig(
                    prc=prc,
                    graphs=g,
                    tau=spec.tau,
                    init_phases=init,
                    seed=seed,
                    horizon=spec.horizon,
                    freq_error=freq_error,
                    delay_jitter=jitter,
                    sample_interval=spec.sampling.interval,
                    conv_tolerance=spec.tolerance,
                    stop_on_convergence=False,
                )
                series = sync_error_series(simulate(config))
                result.files.append(
                    write_range_series(out / f"figure3_{setting}_{label}_seed{k}.csv", series)
                )
                finals.append(series[-1][1] if series else 0.0)
                floors.append(steady_state_error(series))
                converged.append(min((e for _, e in series), default=0.0) < 1e-6)
            summary[f"{setting}/{label}"] = {
                "final_error": finals,
                "steady_state_error": floors,
                "median_steady_state_error": float(np.median(floors)),
                "reached_1e-6": converged,
            }
    result.summary = summary
    result.files.append(write_json(out / "figure3.json", summary))
    logger.success(f"figure3 complete: {len(result.files)} files")
    return _finish(spec, result)


COMMAND_RUNNERS = {
    "run": cmd_run,
    "basin": cmd_basin,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
    "figure2": cmd_figure2,
    "figure3": cmd_figure3,
}


def run_spec(spec: ExperimentSpec) -> CommandResult:
    return COMMAND_RUNNERS[spec.command](spec)
