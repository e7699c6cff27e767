import math

import numpy as np
import pytest

from pcosync.core import (
    MirolloStrogatz,
    StrongFire,
    StrongReset,
    Weighted,
    make_preset,
    prc_from_vertices,
)
from pcosync.engine import (
    ConfigError,
    EventKind,
    EventQueue,
    InitSpec,
    OscillatorState,
    SimConfig,
    Simulator,
    deliver,
    first_fire_times,
    next_event_time,
    run_window_map,
    simulate,
)
from pcosync.graphs import (
    DirectedGraph,
    complete_graph,
    cycle_graph,
    gen_grid_with_failures,
    is_aperiodic,
    path_graph,
    random_aperiodic_digraph,
)
from pcosync.maps import iterate_sr, range_of, sf_next_fire_times, sr_time_map, window_frame


def circular_gap(a, b) -> float:
    d = np.mod(np.abs(np.asarray(a) - np.asarray(b)), 1.0)
    return float(np.max(np.minimum(d, 1.0 - d)))


def test_event_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.schedule(1.0, EventKind.SAMPLE)
    first = q.schedule(0.5, EventKind.ARRIVAL, node=2)
    second = q.schedule(0.5, EventKind.ARRIVAL, node=1)
    assert q.peek() == first
    assert [e.node for e in q.pop_until(0.5)] == [2, 1]
    assert second.seq > first.seq
    assert len(q) == 1


def test_deliver_honours_quiescence():
    effect = deliver(OscillatorState(0.3), StrongReset(0.5), now=1.0, quiescent=0.2)
    assert effect.phase == 0.0
    assert effect.quiescent_until == pytest.approx(1.2)
    blocked = deliver(
        OscillatorState(0.1, quiescent_until=1.2), StrongReset(0.5), now=1.1, quiescent=0.2
    )
    assert blocked.dropped
    assert blocked.phase == pytest.approx(0.1)


def test_deliver_reports_forced_firing():
    effect = deliver(OscillatorState(0.9), StrongFire(0.5), now=0.0)
    assert effect.fired
    assert effect.phase == 0.0


def test_next_event_time():
    q = EventQueue()
    assert next_event_time(np.array([0.5]), np.array([1.0]), q, 0.0) == pytest.approx(0.5)
    q.schedule(0.3, EventKind.ARRIVAL, node=0)
    assert next_event_time(np.array([0.5]), np.array([1.0]), q, 0.0) == pytest.approx(0.3)
    assert next_event_time(np.array([0.5]), np.array([2.0]), EventQueue(), 1.0) == 1.25


def test_config_validation():
    base = dict(prc=StrongReset(0.5), graphs=complete_graph(2), init_phases=[0.0, 0.1])
    with pytest.raises(ConfigError):
        Simulator(SimConfig(tau=0.5, **base))
    with pytest.raises(ConfigError):
        Simulator(SimConfig(tau=0.1, **{**base, "init_phases": [0.0]}))
    with pytest.raises(ConfigError):
        Simulator(SimConfig(tau=0.1, **{**base, "init_phases": [0.0, 1.0]}))
    for prc in (StrongReset(0.05), StrongFire(0.1), Weighted(StrongReset(0.08), 0.05)):
        with pytest.raises(ConfigError):
            Simulator(SimConfig(tau=0.1, **{**base, "prc": prc}))
    with pytest.raises(ConfigError):
        Simulator(SimConfig(tau=0.1, weighted_prc=True, **{**base, "prc": MirolloStrogatz()}))
    Simulator(SimConfig(tau=0.1, weighted_prc=True, **base))


def test_lone_oscillator_fires_every_period():
    config = SimConfig(
        prc=StrongReset(0.5),
        graphs=DirectedGraph(1),
        tau=0.1,
        init_phases=[0.3],
        horizon=2.5,
        stop_on_convergence=False,
    )
    trace = simulate(config)
    assert [v for _, v in trace.firings] == [0, 0]
    assert [t for t, _ in trace.firings] == pytest.approx([0.7, 1.7])
    assert trace.final_phases == pytest.approx([0.8])


def test_two_node_strong_reset_walkthrough():
    config = SimConfig(
        prc=StrongReset(0.4),
        graphs=complete_graph(2),
        tau=0.1,
        init_phases=[0.99, 0.95],
        horizon=0.2,
        record_arrivals=True,
    )
    trace = simulate(config)
    assert [v for _, v in trace.firings] == [0, 1]
    assert [t for t, _ in trace.firings] == pytest.approx([0.01, 0.05])
    assert [(node, source) for _, node, source, _ in trace.arrivals] == [(1, 0), (0, 1)]
    assert [t for t, *_ in trace.arrivals] == pytest.approx([0.11, 0.15])
    assert trace.final_phases == pytest.approx([0.05, 0.09])


def test_same_seed_same_trace():
    config = SimConfig(
        prc=make_preset("s2-default", 0.1),
        graphs=random_aperiodic_digraph(8, 0.3, seed=2),
        tau=0.1,
        init_phases=InitSpec("uniform"),
        seed=11,
        horizon=20,
        freq_error=0.02,
        delay_jitter=0.1,
    )
    assert simulate(config) == simulate(config)


def test_phases_stay_in_unit_interval_and_arrivals_are_causal():
    tau, jitter = 0.1, 0.2
    config = SimConfig(
        prc=make_preset("ms", tau),
        graphs=random_aperiodic_digraph(6, 0.4, seed=1),
        tau=tau,
        init_phases=InitSpec("uniform"),
        seed=3,
        horizon=15,
        freq_error=0.05,
        delay_jitter=jitter,
        record_arrivals=True,
    )
    sim = Simulator(config)
    assert np.all(np.abs(sim.freqs - 1.0) <= 0.05)
    trace = sim.run()
    assert all(0.0 <= p < 1.0 for p in trace.final_phases)
    for t, _, _, emitted in trace.arrivals:
        assert tau * (1 - jitter) - 1e-9 <= t - emitted <= tau * (1 + jitter) + 1e-9


def test_synchrony_is_absorbing():
    config = SimConfig(
        prc=StrongReset(0.6),
        graphs=complete_graph(3),
        tau=0.1,
        init_phases=[0.3, 0.3, 0.3],
        horizon=12,
        stop_on_convergence=False,
    )
    trace = simulate(config)
    assert all(r == 0.0 for _, r in trace.window_ranges)
    assert len(set(trace.final_phases)) == 1
    assert trace.converged_at == 0.0


def test_window_map_matches_strong_reset_map():
    g = complete_graph(3)
    phases = np.array([0.999, 0.95, 0.92])
    engine = run_window_map(phases, g, StrongReset(0.6), 0.1)
    rotated, shift = window_frame(phases)
    expected = np.mod(sr_time_map(rotated, g, 0.1, 0.6) - shift, 1.0)
    assert circular_gap(engine, expected) < 1e-9


def test_window_map_on_random_in_basin_states():
    rng = np.random.default_rng(5)
    for seed in range(15):
        n = int(rng.integers(3, 8))
        g = random_aperiodic_digraph(n, 0.4, seed)
        phases = np.mod(rng.random() + 0.3 * rng.random(n), 1.0)
        engine = run_window_map(phases, g, StrongReset(0.5), 0.1, seed=seed)
        rotated, shift = window_frame(phases)
        expected = np.mod(sr_time_map(rotated, g, 0.1, 0.5) - shift, 1.0)
        assert circular_gap(engine, expected) < 1e-9


def test_lone_oscillator_window_map():
    out = run_window_map([0.3], DirectedGraph(1), StrongReset(0.5), 0.1)
    assert circular_gap(out, [0.4]) < 1e-9


def test_first_fire_times_match_strong_firing_fixed_point():
    g = path_graph(3)
    phases = [0.999, 0.5, 0.5]
    first, _ = first_fire_times(phases, g, StrongFire(0.4), 0.1)
    aligned, _ = window_frame(phases, delta=1e-12)
    expected = sf_next_fire_times(aligned, g, 0.1)
    assert first == pytest.approx(expected, abs=1e-9)
    assert first == pytest.approx([0.0, 0.1, 0.2], abs=1e-9)


def test_self_loops_break_periodicity():
    phases = [0.0, 0.05, 0.1, 0.15]
    base = dict(prc=StrongReset(0.5), graphs=cycle_graph(4), tau=0.1, init_phases=phases)
    assert simulate(SimConfig(horizon=40, **base)).converged_at is None
    looped = simulate(SimConfig(horizon=40, self_loop_sim=True, **base))
    assert looped.converged_at is not None


# halves phases near tau and pins phases in [0.04, 0.06] to 0.05
HALVING_PRC = prc_from_vertices(
    [
        (0.0, 0.0),
        (0.03, 0.0),
        (0.04, 0.01),
        (0.06, -0.01),
        (0.08, -0.04),
        (0.12, -0.06),
        (0.14, 0.0),
        (1.0, 0.0),
    ]
)


def test_quiescence_synchronizes_periodic_cycle():
    # bipartite 4-cycle: each node hears both neighbours at the same instant
    g = cycle_graph(4, bidirectional=True)
    assert not is_aperiodic(g)
    phases = [0.95, 0.94, 0.95, 0.94]
    base = dict(graphs=g, tau=0.1, init_phases=phases, horizon=30)

    # only the first of the two pulses applies and the lagging side lands on the leader
    quiet = simulate(SimConfig(prc=HALVING_PRC, quiescent=0.3, **base))
    assert quiet.converged_at is not None
    assert quiet.converged_at <= 2 * 1.1 + 1e-9

    # the second pulse pins both sides to 0.05 and the lag only swaps sides
    eager = simulate(SimConfig(prc=HALVING_PRC, quiescent=0.0, **base))
    assert eager.converged_at is None
    assert min(r for _, r in eager.window_ranges) == pytest.approx(0.01, abs=1e-6)

    sr = simulate(SimConfig(prc=StrongReset(0.5), quiescent=0.0, **base))
    assert sr.converged_at is None
    trajectory = iterate_sr(phases, g, 0.1, 0.5, 20)
    assert [range_of(x) for x in trajectory] == pytest.approx([0.01] * 21)


def test_drop_on_switch_keeps_only_same_window_pulses():
    tau = 0.1
    config = SimConfig(
        prc=make_preset("s2-default", tau),
        graphs=gen_grid_with_failures(3, 3, 1, seed=0, windows=5),
        tau=tau,
        init_phases=InitSpec("window", 0.3),
        seed=4,
        horizon=15,
        self_loop_sim=True,
        drop_on_switch=True,
        record_arrivals=True,
        stop_on_convergence=False,
    )
    trace = simulate(config)
    assert trace.arrivals
    for t, _, _, emitted in trace.arrivals:
        assert math.floor((emitted + 1e-9) / (1 + tau)) == math.floor((t - 1e-9) / (1 + tau))


def test_sleep_schedule_widens_the_band():
    tau = 0.1
    config = SimConfig(
        prc=make_preset("s2-default", tau),
        graphs=complete_graph(3),
        tau=tau,
        init_phases=[0.0, 0.1, 0.2],
        horizon=10,
        schedule=((0, 0.6, 0.6), (4, 0.4, 0.8)),
        stop_on_convergence=False,
    )
    sim = Simulator(config)
    sim.run()
    assert (sim.prc.B0, sim.prc.B1) == (0.4, 0.8)
    assert sim.prc_bounds_for(2) == (0.6, 0.6)


def test_initial_window_spec():
    rng = np.random.default_rng(0)
    phases = InitSpec("window", 0.2).sample(50, rng)
    assert range_of(phases) <= 0.2
    assert np.all((0 <= phases) & (phases < 1))
