"""Exact event-driven simulation of pulse-coupled oscillators with delays.

Phases advance linearly between events. A node reaching phase 1 fires, resets
to 0 and schedules one arrival per successor in the graph of the current
window. Events sharing a timestamp (within ``TIE_TOL``) are processed one at a
time in an order drawn from the seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import heapq
import itertools
from typing import Optional, Sequence, Union

from loguru import logger
import numpy as np

from pcosync.config import DEFAULT_CONV_TOL, TIE_TOL
from pcosync.core import (
    InvalidParameterError,
    PcoError,
    PrcSpec,
    StrongFire,
    StrongReset,
    StrongTypeII,
    Weighted,
    apply_prc,
    inhibitory_bound,
    s2_curve,
)
from pcosync.graphs import DirectedGraph, GraphSequence, add_self_loops
from pcosync.maps import range_of, window_frame

# below TIE_TOL: the aligned leader fires in the opening batch at t = 0
ALIGN_EPS = 1e-14


class ConfigError(InvalidParameterError):
    pass


class ZenoGuardError(PcoError):
    pass


# ---- state and events -------------------------------------------------------


@dataclass
class OscillatorState:
    phase: float
    freq: float = 1.0
    quiescent_until: Optional[float] = None
    last_fire: Optional[float] = None


@dataclass(frozen=True)
class Delivery:
    phase: float
    fired: bool
    quiescent_until: Optional[float]
    dropped: bool = False


class EventKind(Enum):
    FIRE = 1
    ARRIVAL = 2
    GRAPH_SWITCH = 3
    SAMPLE = 4


@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    node: int = field(default=-1, compare=False)
    source: int = field(default=-1, compare=False)
    emit_time: float = field(default=0.0, compare=False)
    window: int = field(default=-1, compare=False)
    forced: bool = field(default=False, compare=False)


class EventQueue:
    """Future event list ordered by (time, insertion)."""

    def __init__(self):
        self._events: list[Event] = []
        self._counter = itertools.count()

    def schedule(self, time: float, kind: EventKind, **payload) -> Event:
        event = Event(time, next(self._counter), kind, **payload)
        heapq.heappush(self._events, event)
        return event

    def peek(self) -> Optional[Event]:
        return self._events[0] if self._events else None

    def pop_until(self, time: float) -> list[Event]:
        out = []
        while self._events and self._events[0].time <= time:
            out.append(heapq.heappop(self._events))
        return out

    def __len__(self) -> int:
        return len(self._events)


# ---- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class InitSpec:
    """Initial phase distribution: uniform on [0, 1), a random window of ``width``,
    or explicit ``phases``."""

    mode: str = "uniform"
    width: float = 0.0
    phases: tuple[float, ...] = ()

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "explicit":
            return np.asarray(self.phases, dtype=float)
        if self.mode == "uniform":
            return rng.random(n)
        if self.mode == "window":
            start = rng.random()
            return np.mod(start + self.width * rng.random(n), 1.0)
        raise ConfigError(f"unknown init mode {self.mode!r}")


@dataclass(frozen=True)
class SimConfig:
    prc: PrcSpec
    graphs: Union[GraphSequence, DirectedGraph]
    tau: float
    init_phases: Union[Sequence[float], InitSpec]
    seed: int = 0
    horizon: float = 50.0
    freq_error: float = 0.0
    delay_jitter: float = 0.0
    quiescent: float = 0.0
    self_loop_sim: bool = False
    sample_interval: float = 0.1
    conv_tolerance: float = DEFAULT_CONV_TOL
    edge_prcs: Optional[dict] = None
    weighted_prc: bool = False
    drop_on_switch: bool = False
    schedule: Optional[tuple[tuple[int, float, float], ...]] = None
    stop_on_convergence: bool = True
    record_arrivals: bool = False

    @property
    def sequence(self) -> GraphSequence:
        if isinstance(self.graphs, DirectedGraph):
            return GraphSequence.static(self.graphs)
        return self.graphs

    @property
    def window(self) -> float:
        return 1.0 + self.tau

    def validate(self) -> None:
        if not 0 < self.tau < 0.5:
            raise ConfigError(f"tau must satisfy 0 < tau < 0.5, got {self.tau}")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.conv_tolerance <= 0:
            raise ConfigError("conv_tolerance must be positive")
        if self.sample_interval <= 0:
            raise ConfigError("sample_interval must be positive")
        if not 0 <= self.freq_error < 1 or not 0 <= self.delay_jitter < 1:
            raise ConfigError("freq_error and delay_jitter must lie in [0, 1)")
        if self.quiescent < 0:
            raise ConfigError("quiescent period cannot be negative")
        self._check_prc()
        if isinstance(self.init_phases, InitSpec):
            if self.init_phases.mode == "explicit":
                self._check_phases(self.init_phases.phases)
        else:
            self._check_phases(self.init_phases)

    def _check_prc(self) -> None:
        b0 = inhibitory_bound(self.prc)
        banded = (StrongReset, StrongFire, StrongTypeII, Weighted)
        if isinstance(self.prc, banded) and not self.tau < b0 < 1:
            raise ConfigError(f"B0 must satisfy tau < B0 < 1, got B0={b0} tau={self.tau}")
        if self.weighted_prc and b0 <= 0:
            raise ConfigError("weighted_prc needs a PRC with an inhibitory band")

    def _check_phases(self, phases: Sequence[float]) -> None:
        n = self.sequence.n
        if len(phases) != n:
            raise ConfigError(f"{len(phases)} initial phases for {n} nodes")
        if any(not 0 <= p < 1 for p in phases):
            raise ConfigError("initial phases must lie in [0, 1)")


@dataclass
class Trace:
    firings: list[tuple[float, int]]
    range_series: list[tuple[float, float]]
    window_ranges: list[tuple[float, float]]
    converged_at: Optional[float]
    events_processed: int
    final_phases: list[float]
    initial_phases: list[float]
    seed: int
    end_time: float
    arrivals: list[tuple[float, int, int, float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.final_phases)

    @property
    def rho_initial(self) -> float:
        return range_of(self.initial_phases)


# ---- single-pulse delivery --------------------------------------------------


def deliver(
    target_state: OscillatorState, prc: PrcSpec, now: float, quiescent: float = 0.0
) -> Delivery:
    """Apply one arriving pulse unless the target is inside its quiescent window."""
    if target_state.quiescent_until is not None and target_state.quiescent_until > now:
        return Delivery(target_state.phase, False, target_state.quiescent_until, dropped=True)
    phase, fired = apply_prc(target_state.phase, prc)
    until = now + quiescent if quiescent > 0 else target_state.quiescent_until
    return Delivery(phase, fired, until)


def next_event_time(
    phases: np.ndarray, freqs: np.ndarray, queue: EventQueue, now: float
) -> float:
    """Earliest of the queue head and every intrinsic firing time."""
    t = np.inf
    if phases.size:
        t = now + float(np.min((1.0 - phases) / freqs))
    head = queue.peek()
    if head is not None:
        t = min(t, head.time)
    return t


# ---- simulator --------------------------------------------------------------


class Simulator:
    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.seq = config.sequence
        self.n = self.seq.n
        self.rng = np.random.default_rng(config.seed)
        if isinstance(config.init_phases, InitSpec):
            init = config.init_phases.sample(self.n, self.rng)
        else:
            init = np.asarray(config.init_phases, dtype=float)
        self.initial = init.copy()
        self.phases = init.copy()
        if config.freq_error > 0:
            e = config.freq_error
            self.freqs = self.rng.uniform(1.0 - e, 1.0 + e, self.n)
        else:
            self.freqs = np.ones(self.n)
        self.quiescent_until: list[Optional[float]] = [None] * self.n
        self.last_fire: list[Optional[float]] = [None] * self.n
        self.prc = config.prc
        self.window_index = 0
        self.graph = self._window_graph(0)
        self.queue = EventQueue()
        self.now = 0.0
        self.firings: list[tuple[float, int]] = []
        self.arrivals: list[tuple[float, int, int, float]] = []
        self.range_series: list[tuple[float, float]] = []
        self.window_ranges: list[tuple[float, float]] = []
        self.converged_at: Optional[float] = None
        self.events_processed = 0
        self._edge_prc_cache: dict[tuple[int, int, int], PrcSpec] = {}

    def _window_graph(self, index: int) -> DirectedGraph:
        g = self.seq.graph_at(index)
        return add_self_loops(g) if self.config.self_loop_sim else g

    def state(self, v: int) -> OscillatorState:
        return OscillatorState(
            float(self.phases[v]), float(self.freqs[v]), self.quiescent_until[v], self.last_fire[v]
        )

    def _edge_prc(self, src: int, dst: int, weight: float) -> PrcSpec:
        key = (src, dst, id(self.prc))
        prc = self._edge_prc_cache.get(key)
        if prc is None:
            prc = self.prc
            if self.config.edge_prcs and (src, dst) in self.config.edge_prcs:
                prc = self.config.edge_prcs[(src, dst)]
            elif self.config.weighted_prc:
                prc = Weighted(prc, min(weight, inhibitory_bound(prc)))
            self._edge_prc_cache[key] = prc
        return prc

    def _advance(self, t: float) -> None:
        if t > self.now:
            self.phases = np.minimum(self.phases + self.freqs * (t - self.now), 1.0)
            self.now = t

    def _switch(self, index: int) -> None:
        self.window_index = index
        self.graph = self._window_graph(index)
        if self.config.schedule and isinstance(self.prc, StrongTypeII):
            B0, B1 = self.prc_bounds_for(index)
            if (B0, B1) != (self.prc.B0, self.prc.B1):
                tau = self.config.tau
                self.prc = s2_curve(B0, B1, tau, min(tau, B0 - tau), self.prc.curve.values[-1])
                logger.debug(f"window {index}: S2 band moved to B0={B0:.4g} B1={B1:.4g}")
        self.queue.schedule(
            (index + 1) * self.config.window, EventKind.GRAPH_SWITCH, window=index + 1
        )

    def prc_bounds_for(self, index: int) -> tuple[float, float]:
        """(B0, B1) of the last schedule entry starting at or before window ``index``."""
        current = (self.prc.B0, self.prc.B1)
        for start, B0, B1 in self.config.schedule:
            if start <= index:
                current = (B0, B1)
        return current

    def _fire(self, v: int) -> None:
        cfg = self.config
        self.phases[v] = 0.0
        self.last_fire[v] = self.now
        self.firings.append((self.now, v))
        for e in self.graph.successors(v):
            jitter = 1.0
            if cfg.delay_jitter > 0:
                jitter = self.rng.uniform(1.0 - cfg.delay_jitter, 1.0 + cfg.delay_jitter)
            self.queue.schedule(
                self.now + cfg.tau * e.delay_scale * jitter,
                EventKind.ARRIVAL,
                node=e.dst,
                source=v,
                emit_time=self.now,
                window=self.window_index,
            )

    def _arrive(self, ev: Event, pending: list[Event]) -> None:
        cfg = self.config
        if cfg.drop_on_switch and ev.window != self.window_index:
            return
        if cfg.record_arrivals:
            self.arrivals.append((self.now, ev.node, ev.source, ev.emit_time))
        weight = 1.0
        for e in self.graph.predecessors(ev.node):
            if e.src == ev.source:
                weight = e.weight
                break
        prc = self._edge_prc(ev.source, ev.node, weight)
        effect = deliver(self.state(ev.node), prc, self.now, cfg.quiescent)
        if effect.dropped:
            return
        self.phases[ev.node] = effect.phase
        self.quiescent_until[ev.node] = effect.quiescent_until
        if effect.fired:
            pending.append(Event(self.now, -1, EventKind.FIRE, node=ev.node, forced=True))

    def _process_instant(self, batch: list[Event]) -> None:
        """Handle everything scheduled at the current timestamp."""
        switches = [ev for ev in batch if ev.kind is EventKind.GRAPH_SWITCH]
        samples = [ev for ev in batch if ev.kind is EventKind.SAMPLE]
        pending = [ev for ev in batch if ev.kind in (EventKind.FIRE, EventKind.ARRIVAL)]
        for ev in switches:
            self._switch(ev.window)
        for v in np.flatnonzero(self.phases >= 1.0 - TIE_TOL):
            pending.append(Event(self.now, -1, EventKind.FIRE, node=int(v)))

        fired_now: set[int] = set()
        handled = 0
        limit = self.n * self.n + self.n
        while pending:
            i = int(self.rng.integers(len(pending))) if len(pending) > 1 else 0
            pending[i], pending[-1] = pending[-1], pending[i]
            ev = pending.pop()
            handled += 1
            if handled > limit:
                raise ZenoGuardError(
                    f"more than {limit} same-instant events at t={self.now:.12g}"
                )
            if ev.kind is EventKind.FIRE:
                if ev.node in fired_now:
                    continue
                if not ev.forced and self.phases[ev.node] < 1.0 - TIE_TOL:
                    continue
                fired_now.add(ev.node)
                self._fire(ev.node)
            else:
                self._arrive(ev, pending)
        self.events_processed += handled + len(switches) + len(samples)

        if not samples and not switches:
            return
        rho = range_of(self.phases)
        if samples:
            self.range_series.append((self.now, rho))
            self.queue.schedule(
                samples[-1].time + self.config.sample_interval, EventKind.SAMPLE
            )
        if switches:
            self.window_ranges.append((self.now, rho))
            self._check_convergence()

    def _check_convergence(self) -> None:
        if self.converged_at is not None or len(self.window_ranges) < 2:
            return
        tol = self.config.conv_tolerance
        (t0, r0), (t1, r1) = self.window_ranges[-2], self.window_ranges[-1]
        if r0 >= tol or r1 >= tol:
            return
        if all(r < tol for t, r in self.range_series if t0 < t <= t1):
            self.converged_at = t0

    def run(self) -> Trace:
        cfg = self.config
        self.queue.schedule(0.0, EventKind.GRAPH_SWITCH, window=0)
        self.queue.schedule(0.0, EventKind.SAMPLE)
        # window 0 is installed by the first GRAPH_SWITCH
        while True:
            t = next_event_time(self.phases, self.freqs, self.queue, self.now)
            if t > cfg.horizon:
                break
            self._advance(t)
            batch = self.queue.pop_until(self.now + TIE_TOL)
            self._process_instant(batch)
            if cfg.stop_on_convergence and self.converged_at is not None:
                break
        if self.converged_at is None or not cfg.stop_on_convergence:
            self._advance(cfg.horizon)
        logger.debug(
            f"simulated {self.n} oscillators to t={self.now:.4g}: "
            f"{self.events_processed} events, converged_at={self.converged_at}"
        )
        return Trace(
            firings=self.firings,
            range_series=self.range_series,
            window_ranges=self.window_ranges,
            converged_at=self.converged_at,
            events_processed=self.events_processed,
            final_phases=[float(p) for p in self.phases],
            initial_phases=[float(p) for p in self.initial],
            seed=cfg.seed,
            end_time=self.now,
            arrivals=self.arrivals,
        )


def simulate(config: SimConfig) -> Trace:
    return Simulator(config).run()


def run_window_map(
    phases: Sequence[float], g: DirectedGraph, prc: PrcSpec, tau: float, seed: int = 0
) -> np.ndarray:
    """Simulate exactly one window of length 1 + tau from the aligned frame.

    Phases are rotated so the leader is about to fire, simulated with no pulses
    in flight, and rotated back; the result is reduced mod 1.
    """
    aligned, shift = window_frame(phases, delta=ALIGN_EPS)
    config = SimConfig(
        prc=prc,
        graphs=g,
        tau=tau,
        init_phases=[float(p) for p in aligned],
        seed=seed,
        horizon=1.0 + tau,
        sample_interval=1.0 + tau,
        stop_on_convergence=False,
    )
    trace = simulate(config)
    return np.mod(np.asarray(trace.final_phases) - shift, 1.0)


def first_fire_times(
    phases: Sequence[float], g: DirectedGraph, prc: PrcSpec, tau: float, seed: int = 0
) -> tuple[np.ndarray, float]:
    """First firing time of every node from the aligned frame, plus the rotation used."""
    aligned, shift = window_frame(phases, delta=ALIGN_EPS)
    config = SimConfig(
        prc=prc,
        graphs=g,
        tau=tau,
        init_phases=[float(p) for p in aligned],
        seed=seed,
        horizon=1.0 + tau,
        sample_interval=1.0 + tau,
        stop_on_convergence=False,
    )
    trace = simulate(config)
    first = np.full(g.n, np.nan)
    for t, v in trace.firings:
        if np.isnan(first[v]):
            first[v] = t
    return first, shift