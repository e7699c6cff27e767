import networkx as nx
import pytest

from pcosync.core import InvalidParameterError
from pcosync.graphs import (
    DirectedGraph,
    Edge,
    GraphFormatError,
    GraphSequence,
    NotStronglyConnectedError,
    SequencePolicy,
    add_self_loops,
    complete_graph,
    coverage_depth,
    cycle_graph,
    gen_binary_tree_triangle,
    gen_grid_with_failures,
    gen_random_geometric,
    graph_period,
    graph_stats,
    grid_graph,
    is_aperiodic,
    is_strongly_connected,
    max_coverage_depth,
    path_graph,
    random_aperiodic_digraph,
    random_connected_undirected,
    random_indegree_digraph,
    random_tree_sequence,
    read_graph,
    read_sequence,
    star_graph,
    weighted_condition,
    with_uniform_weight,
    write_graph,
    write_sequence,
)


def to_networkx(g: DirectedGraph) -> nx.DiGraph:
    out = nx.DiGraph()
    out.add_nodes_from(range(g.n))
    out.add_edges_from((e.src, e.dst) for e in g.edges)
    return out


def test_graph_rejects_bad_edges():
    with pytest.raises(InvalidParameterError):
        DirectedGraph(2, [(0, 0)])
    with pytest.raises(InvalidParameterError):
        DirectedGraph(2, [(0, 1), (0, 1)])
    with pytest.raises(InvalidParameterError):
        DirectedGraph(2, [Edge(0, 1, weight=0.0)])
    with pytest.raises(InvalidParameterError):
        DirectedGraph(2, [(0, 2)])
    with pytest.raises(InvalidParameterError):
        DirectedGraph(0)


def test_successors_and_predecessors():
    g = DirectedGraph(3, [(0, 1), (0, 2), (2, 1)])
    assert [e.dst for e in g.successors(0)] == [1, 2]
    assert sorted(e.src for e in g.predecessors(1)) == [0, 2]
    assert g.has_edge(2, 1) and not g.has_edge(1, 2)
    assert not g.is_undirected()


def test_periodicity():
    c3 = cycle_graph(3)
    assert graph_period(c3) == 3
    assert not is_aperiodic(c3)
    looped = DirectedGraph(3, list(c3.edges) + [Edge(0, 0)], allow_self_loops=True)
    assert is_aperiodic(looped)
    assert is_aperiodic(complete_graph(3))
    assert graph_period(grid_graph(3, 3)) == 2


def test_period_needs_strong_connectivity():
    with pytest.raises(NotStronglyConnectedError):
        graph_period(path_graph(3, bidirectional=False))


def test_coverage_depth():
    assert coverage_depth(complete_graph(3)) == 2
    assert coverage_depth(cycle_graph(4), d_max=20) is None
    assert coverage_depth(add_self_loops(path_graph(4))) == 3
    assert coverage_depth(add_self_loops(cycle_graph(4))) == 3


def test_coverage_depth_bounded_on_aperiodic_graphs():
    for seed in range(20):
        g = random_aperiodic_digraph(6, 0.3, seed)
        d = coverage_depth(g, d_max=64)
        assert d is not None
        assert d <= g.n * g.n


def test_random_aperiodic_digraph_needs_three_nodes():
    with pytest.raises(InvalidParameterError):
        random_aperiodic_digraph(2, 0.9, seed=0)
    g = random_aperiodic_digraph(3, 0.9, seed=0)
    assert is_aperiodic(g)


def test_graph_stats():
    stats = graph_stats(DirectedGraph(3, [(0, 1), (1, 0)]))
    assert stats.has_isolated
    assert not stats.strongly_connected
    stats = graph_stats(DirectedGraph(4, [(0, 1), (2, 3)]))
    assert not stats.has_isolated
    assert not stats.strongly_connected
    stats = graph_stats(star_graph(4))
    assert (stats.min_indegree, stats.max_indegree) == (1, 3)
    assert stats.strongly_connected
    assert graph_stats(add_self_loops(DirectedGraph(2))).has_isolated


def test_strong_connectivity_agrees_with_networkx():
    for seed in range(30):
        g = random_indegree_digraph(7, 2, seed)
        assert is_strongly_connected(g) == nx.is_strongly_connected(to_networkx(g))


def test_aperiodicity_agrees_with_networkx():
    for seed in range(20):
        g = random_aperiodic_digraph(8, 0.2, seed)
        assert nx.is_aperiodic(to_networkx(g))
    assert not nx.is_aperiodic(to_networkx(cycle_graph(5)))
    assert not is_aperiodic(cycle_graph(5))


def test_binary_tree_triangle():
    g = gen_binary_tree_triangle(2)
    assert g.n == 7
    assert len(g.edges) == 14
    assert g.has_edge(3, 4) and g.has_edge(4, 3)
    assert is_aperiodic(g)
    assert gen_binary_tree_triangle(1) == complete_graph(3)
    assert gen_binary_tree_triangle(3).n == 15


def test_random_geometric():
    g = gen_random_geometric(2, 2 ** 0.5, seed=1)
    assert len(g.edges) == 2
    assert gen_random_geometric(1, 0.1, seed=1).n == 1
    a = gen_random_geometric(100, 0.18, seed=7)
    b = gen_random_geometric(100, 0.18, seed=7)
    assert a == b
    assert is_strongly_connected(a)
    assert a.is_undirected()


def test_grid_with_failures():
    assert gen_grid_with_failures(2, 2, 0, seed=0, windows=3).graph_at(1) == grid_graph(2, 2)
    seq = gen_grid_with_failures(3, 3, 1, seed=4, windows=5)
    again = gen_grid_with_failures(3, 3, 1, seed=4, windows=5)
    for i in range(8):
        g = seq.graph_at(i)
        assert g == again.graph_at(i)
        assert len(g.edges) == 22
        assert not graph_stats(g).has_isolated
    with pytest.raises(InvalidParameterError):
        gen_grid_with_failures(2, 2, 2, seed=0, windows=1)


def test_grid_with_failures_covers_with_self_loops():
    seq = gen_grid_with_failures(3, 3, 1, seed=2, windows=10).map(add_self_loops)
    d = max_coverage_depth(seq, windows=10)
    assert d is not None
    assert d >= 4


def test_random_trees_are_spanning():
    seq = random_tree_sequence(8, seed=3, windows=4)
    for i in range(6):
        g = seq.graph_at(i)
        assert len(g.edges) == 2 * 7
        assert is_strongly_connected(g)


def test_random_connected_undirected():
    g = random_connected_undirected(10, 0.1, seed=5)
    assert g.is_undirected()
    assert is_strongly_connected(g)


def test_random_indegree_digraph():
    g = random_indegree_digraph(6, 3, seed=0)
    assert all(len(g.predecessors(v)) == 3 for v in range(6))
    assert random_indegree_digraph(5, 4, seed=1) == complete_graph(5)
    with pytest.raises(InvalidParameterError):
        random_indegree_digraph(5, 5, seed=1)


def test_weighted_condition():
    g = with_uniform_weight(complete_graph(4), 0.06)
    assert weighted_condition(g, 0.1)
    assert not weighted_condition(g, 0.2)


def test_add_self_loops_is_idempotent():
    g = add_self_loops(complete_graph(3))
    assert len(g.edges) == 9
    assert add_self_loops(g) == g
    assert is_aperiodic(add_self_loops(cycle_graph(4)))


def test_sequence_policies():
    a, b = complete_graph(3), cycle_graph(3)
    cyclic = GraphSequence((a, b), SequencePolicy.CYCLIC)
    assert cyclic.graph_at(0) == a
    assert cyclic.graph_at(3) == b
    static = GraphSequence((a, b))
    assert static.graph_at(10) == b
    with pytest.raises(InvalidParameterError):
        GraphSequence((a, complete_graph(4)))


def test_graph_file_round_trip(tmp_path):
    g = DirectedGraph(3, [Edge(0, 1, 0.5), Edge(1, 2, 1.0, 2.0), Edge(2, 0)])
    assert read_graph(write_graph(g, tmp_path / "g.txt")) == g


def test_sequence_directory_round_trip(tmp_path):
    seq = gen_grid_with_failures(3, 3, 1, seed=1, windows=2)
    loaded = read_sequence(write_sequence(seq, tmp_path / "seq", windows=4))
    assert loaded.policy is SequencePolicy.CYCLIC
    assert loaded.graph_at(2) == seq.graph_at(2)
    assert loaded.graph_at(5) == seq.graph_at(1)


def test_malformed_graph_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 1\n")
    with pytest.raises(GraphFormatError):
        read_graph(path)
    path.write_text("pco-graph v1 n=2\n0 1 1.0 1.0 9\n")
    with pytest.raises(GraphFormatError):
        read_graph(path)
