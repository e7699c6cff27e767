"""Convergence detection, convergence-time bounds, Monte Carlo basin estimates and sweeps."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
import math
from typing import Optional, Sequence

from loguru import logger
import numpy as np
from scipy import stats
from tqdm import tqdm

from pcosync.config import B1_CAP, WORKERS
from pcosync.core import (
    InvalidParameterError,
    PcoError,
    StrongFire,
    StrongReset,
    StrongTypeII,
    s2_curve,
)
from pcosync.engine import InitSpec, SimConfig, Trace, simulate
from pcosync.graphs import DirectedGraph, random_indegree_digraph

Z95 = float(stats.norm.ppf(0.975))
SWEEPABLE = ("tau", "quiescent", "freq_error", "delay_jitter", "B0")


# ---- bounds -----------------------------------------------------------------


def rho0(x: float, y: float, tau: float) -> float:
    return min(x - tau, 1.0 - y + tau)


def t_star(rho: float, d: int, tau: float, kappa: float) -> float:
    """Convergence-time bound rho * d / min(tau, kappa)."""
    if rho < 0 or d < 1 or tau <= 0 or kappa <= 0:
        raise InvalidParameterError(
            f"need rho >= 0, d >= 1, tau > 0, kappa > 0; got {rho}, {d}, {tau}, {kappa}"
        )
    return rho * d / min(tau, kappa)


def convergence_time_bound(rho: float, d: int, tau: float, kappa: float) -> float:
    """Simulated-time bound on ``converged_at`` for an in-basin S2 run.

    Range drops by eps = min(tau, kappa) every d aligned windows and collapses d
    windows after it falls below eps. An aligned window lasts at most 1 + tau + rho;
    the first firing and the persistence window add 1 and 1 + tau.
    """
    eps = min(tau, kappa)
    windows = (math.floor(rho / eps) + 1) * d
    return 1.0 + windows * (1.0 + tau + rho) + (1.0 + tau)


# ---- convergence ------------------------------------------------------------


def detect_convergence(trace: Trace, tol: float, tau: float) -> Optional[float]:
    """First window boundary with range below ``tol`` that stays below for a full window."""
    if trace.n <= 1:
        return 0.0
    window = 1.0 + tau
    boundaries = trace.window_ranges
    samples = trace.range_series
    if not boundaries:
        boundaries = samples
    for i, (t0, r0) in enumerate(boundaries):
        if r0 >= tol:
            continue
        t1 = t0 + window
        if t1 > trace.end_time + 1e-9:
            return None
        later = [r for t, r in samples if t0 < t <= t1 + 1e-12]
        later += [r for t, r in boundaries[i + 1 :] if t <= t1 + 1e-12]
        if all(r < tol for r in later):
            return t0
    return None


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    time: Optional[float]
    rho_initial: float
    basin_ok: bool
    t_star: Optional[float]
    d: Optional[int]
    windows_used: int


def convergence_report(
    config: SimConfig,
    trace: Trace,
    d: Optional[int],
    kappa: float,
    B0: float,
    B1: float,
) -> ConvergenceReport:
    time = detect_convergence(trace, config.conv_tolerance, config.tau)
    rho = trace.rho_initial
    basin_ok = rho < rho0(B0, B1, config.tau)
    bound = t_star(rho, d, config.tau, kappa) if d is not None else None
    return ConvergenceReport(
        converged=time is not None,
        time=time,
        rho_initial=rho,
        basin_ok=basin_ok,
        t_star=bound,
        d=d,
        windows_used=len(trace.window_ranges),
    )


def check_non_expansion(window_ranges: Sequence[tuple[float, float]], tol: float = 1e-12):
    """Index of the first window boundary whose range exceeds its predecessor's, else None."""
    for i in range(1, len(window_ranges)):
        if window_ranges[i][1] > window_ranges[i - 1][1] + tol:
            return i
    return None


def check_contraction(
    window_ranges: Sequence[tuple[float, float]],
    d: int,
    eps: float,
    lag: Optional[int] = None,
    tol: float = 1e-9,
):
    """Index i of the first boundary where the range, still at least ``eps``, has not
    dropped by ``eps`` after ``lag`` (default ``d``) more windows. None when it holds."""
    lag = d if lag is None else lag
    ranges = [r for _, r in window_ranges]
    for i in range(len(ranges) - lag):
        if ranges[i] >= eps and ranges[i + lag] > ranges[i] - eps + tol:
            return i
    return None


def sync_error_series(trace: Trace) -> list[tuple[float, float]]:
    if trace.n <= 1:
        return [(t, 0.0) for t, _ in trace.range_series]
    return list(trace.range_series)


def steady_state_error(series: Sequence[tuple[float, float]], fraction: float = 0.25) -> float:
    """Median error over the last ``fraction`` of the series."""
    if not 0 < fraction <= 1:
        raise InvalidParameterError("fraction must lie in (0, 1]")
    if not series:
        return 0.0
    start = int(len(series) * (1.0 - fraction))
    return float(np.median([err for _, err in series[start:]]))


def sleep_schedule(
    tau: float, d: int, step: Optional[float] = None
) -> list[tuple[int, float, float]]:
    """Widen the S2 band every 2d windows: B0 down and B1 up by ``step`` (default tau),
    from 0.5 + tau until B0 reaches 2 tau. B1 stops at ``B1_CAP``."""
    if not 0 < tau < 0.5:
        raise InvalidParameterError(f"tau must lie in (0, 0.5), got {tau}")
    if d < 1:
        raise InvalidParameterError("d must be at least 1")
    step = tau if step is None else step
    if not 0 < step <= tau:
        raise InvalidParameterError("step must lie in (0, tau]")
    start, floor = 0.5 + tau, 2.0 * tau
    schedule = []
    k = 0
    while True:
        B0 = max(start - k * step, floor)
        B1 = min(start + k * step, B1_CAP)
        if B0 - floor < 1e-12:
            B0 = floor
        schedule.append((2 * d * k, B0, B1))
        if B0 == floor:
            return schedule
        k += 1


# ---- Monte Carlo ------------------------------------------------------------


@dataclass(frozen=True)
class BasinEstimate:
    trials: int
    converged_count: int
    fraction: float
    ci95_halfwidth: float
    errors: int = 0


def binomial_ci(k: int, n: int, exact: bool = False) -> tuple[float, float]:
    """95% interval for a binomial proportion.

    Normal approximation with continuity correction by default; ``exact`` gives
    Clopper-Pearson bounds from beta quantiles.
    """
    if n < 1 or not 0 <= k <= n:
        raise InvalidParameterError(f"need 0 <= k <= n and n >= 1, got k={k} n={n}")
    p = k / n
    if not exact:
        half = Z95 * math.sqrt(p * (1 - p) / n) + 0.5 / n
        return max(0.0, p - half), min(1.0, p + half)
    alpha = 0.05
    lower = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    upper = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lower, upper


def _halfwidth(k: int, n: int, exact: bool) -> float:
    if not exact:
        p = k / n
        return Z95 * math.sqrt(p * (1 - p) / n) + 0.5 / n
    lo, hi = binomial_ci(k, n, exact=True)
    return (hi - lo) / 2


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(child.generate_state(1)[0]) for child in children]


def _run_trial(config: SimConfig) -> Optional[bool]:
    try:
        trace = simulate(config)
    except PcoError as e:
        logger.debug(f"trial seed={config.seed} failed: {e}")
        return None
    return detect_convergence(trace, config.conv_tolerance, config.tau) is not None


def run_trials(
    configs: Sequence[SimConfig],
    parallel: bool = True,
    workers: Optional[int] = None,
    desc: str = "Trials",
) -> list[Optional[bool]]:
    """Outcome per config in input order: True converged, False not, None errored."""
    results: list[Optional[bool]] = [None] * len(configs)
    if not parallel or len(configs) == 1:
        for i, config in enumerate(tqdm(configs, desc=desc)):
            results[i] = _run_trial(config)
        return results
    with ProcessPoolExecutor(max_workers=workers or WORKERS) as executor:
        futures = {executor.submit(_run_trial, c): i for i, c in enumerate(configs)}
        with tqdm(total=len(futures), desc=desc) as pbar:
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                pbar.update(1)
    return results


def summarize(results: Sequence[Optional[bool]], exact: bool = False) -> BasinEstimate:
    trials = len(results)
    converged = sum(1 for r in results if r)
    errors = sum(1 for r in results if r is None)
    return BasinEstimate(
        trials=trials,
        converged_count=converged,
        fraction=converged / trials,
        ci95_halfwidth=_halfwidth(converged, trials, exact),
        errors=errors,
    )


def basin_monte_carlo(
    config_template: SimConfig,
    init_sampler: InitSpec,
    trials: int,
    parallel: bool = True,
    workers: Optional[int] = None,
    master_seed: Optional[int] = None,
    exact: bool = False,
) -> BasinEstimate:
    if trials < 1:
        raise InvalidParameterError("trials must be at least 1")
    master = config_template.seed if master_seed is None else master_seed
    configs = [
        replace(config_template, seed=s, init_phases=init_sampler)
        for s in trial_seeds(master, trials)
    ]
    estimate = summarize(run_trials(configs, parallel, workers, desc="Basin trials"), exact)
    if estimate.errors:
        logger.warning(f"{estimate.errors} of {trials} trials raised and count as not converged")
    logger.info(
        f"basin estimate: {estimate.converged_count}/{trials} converged "
        f"(+/- {estimate.ci95_halfwidth:.3f})"
    )
    return estimate


def with_parameter(config: SimConfig, parameter: str, value: float) -> SimConfig:
    """Copy of ``config`` with one sweepable parameter set."""
    if parameter not in SWEEPABLE:
        raise InvalidParameterError(f"cannot sweep {parameter!r}; choose from {SWEEPABLE}")
    if parameter != "B0":
        return replace(config, **{parameter: value})
    prc = config.prc
    if isinstance(prc, (StrongReset, StrongFire)):
        return replace(config, prc=type(prc)(value))
    if isinstance(prc, StrongTypeII):
        tau = config.tau
        kappa = min(tau, value - tau)
        curve = s2_curve(value, max(prc.B1, value), tau, kappa, prc.curve.values[-1])
        return replace(config, prc=curve)
    raise InvalidParameterError(f"B0 sweep needs an SR, SF or S2 curve, got {type(prc).__name__}")


def parameter_sweep(
    config_template: SimConfig,
    parameter: str,
    values: Sequence[float],
    trials: int,
    init_sampler: InitSpec = InitSpec(),
    parallel: bool = True,
    workers: Optional[int] = None,
    master_seed: Optional[int] = None,
) -> list[tuple[float, BasinEstimate]]:
    """Basin estimate for every value of one config parameter, same seeds per value."""
    table = []
    for value in values:
        logger.info(f"sweep {parameter}={value}")
        config = with_parameter(config_template, parameter, value)
        table.append(
            (
                value,
                basin_monte_carlo(config, init_sampler, trials, parallel, workers, master_seed),
            )
        )
    return table


@dataclass(frozen=True)
class GraphFamily:
    """Random digraphs on ``n`` nodes where every node has exactly ``k`` predecessors."""

    n: int
    seed: int = 0

    def draw(self, k: int, index: int) -> DirectedGraph:
        return random_indegree_digraph(self.n, k, (self.seed * 1_000 + k) * 1_000_003 + index)


def indegree_convergence_sweep(
    graph_family: GraphFamily,
    k_values: Sequence[int],
    trials: int,
    config_template: SimConfig,
    parallel: bool = True,
    workers: Optional[int] = None,
    init_sampler: Optional[InitSpec] = None,
) -> list[tuple[int, BasinEstimate]]:
    """Convergence fraction as the indegree grows, from uniform phases unless
    ``init_sampler`` says otherwise.

    Each trial draws its own graph; ``config_template.graphs`` only fixes the node count.
    """
    init = init_sampler or InitSpec("uniform")
    table = []
    for k in k_values:
        if k < 1:
            raise InvalidParameterError("indegree sweep starts at k = 1")
        seeds = trial_seeds(config_template.seed + k, trials)
        configs = [
            replace(
                config_template,
                graphs=graph_family.draw(k, i),
                seed=s,
                init_phases=init,
            )
            for i, s in enumerate(seeds)
        ]
        estimate = summarize(run_trials(configs, parallel, workers, desc=f"Indegree k={k}"))
        logger.info(f"k={k}: fraction {estimate.fraction:.3f}")
        table.append((k, estimate))
    return table
