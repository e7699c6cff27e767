"""Directed weighted graphs, time-varying graph sequences, generators for the
studied topologies, and the graph conditions behind the convergence results."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import partial
import json
import math
from pathlib import Path
from typing import Callable, Iterable, Optional

from loguru import logger
import networkx as nx
import numpy as np

from pcosync.core import InvalidParameterError, PcoError


class NotStronglyConnectedError(PcoError):
    pass


class UnconnectableError(PcoError):
    pass


class GraphFormatError(PcoError):
    pass


@dataclass(frozen=True, order=True)
class Edge:
    src: int
    dst: int
    weight: float = 1.0
    delay_scale: float = 1.0


class DirectedGraph:
    """Immutable directed graph with precomputed successor and predecessor views."""

    def __init__(self, n: int, edges: Iterable[Edge | tuple] = (), allow_self_loops: bool = False):
        if n < 1:
            raise InvalidParameterError("a graph needs at least one node")
        self.n = n
        self.allow_self_loops = allow_self_loops
        seen: dict[tuple[int, int], Edge] = {}
        for e in edges:
            e = e if isinstance(e, Edge) else Edge(*e)
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise InvalidParameterError(f"edge {e.src}->{e.dst} outside 0..{n - 1}")
            if e.src == e.dst and not allow_self_loops:
                raise InvalidParameterError(f"self-loop on {e.src} but self-loops are disabled")
            if e.weight <= 0 or e.delay_scale <= 0:
                raise InvalidParameterError(f"edge {e.src}->{e.dst} needs positive weight/delay")
            if (e.src, e.dst) in seen:
                raise InvalidParameterError(f"duplicate edge {e.src}->{e.dst}")
            seen[(e.src, e.dst)] = e
        self.edges: tuple[Edge, ...] = tuple(sorted(seen.values()))
        succ: list[list[Edge]] = [[] for _ in range(n)]
        pred: list[list[Edge]] = [[] for _ in range(n)]
        for e in self.edges:
            succ[e.src].append(e)
            pred[e.dst].append(e)
        self._succ = tuple(tuple(s) for s in succ)
        self._pred = tuple(tuple(p) for p in pred)

    def successors(self, v: int) -> tuple[Edge, ...]:
        return self._succ[v]

    def predecessors(self, v: int) -> tuple[Edge, ...]:
        return self._pred[v]

    def has_edge(self, src: int, dst: int) -> bool:
        return any(e.dst == dst for e in self._succ[src])

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for e in self.edges:
            a[e.src, e.dst] = True
        return a

    def to_networkx(self) -> nx.DiGraph:
        out = nx.DiGraph()
        out.add_nodes_from(range(self.n))
        out.add_edges_from((e.src, e.dst, {"weight": e.weight}) for e in self.edges)
        return out

    def is_undirected(self) -> bool:
        return all(self.has_edge(e.dst, e.src) for e in self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"DirectedGraph(n={self.n}, edges={len(self.edges)})"


def _undirected(n: int, pairs: Iterable[tuple[int, int]], **kwargs) -> DirectedGraph:
    edges = []
    for u, v in pairs:
        edges.append(Edge(u, v))
        edges.append(Edge(v, u))
    return DirectedGraph(n, edges, **kwargs)


# ---- sequences --------------------------------------------------------------


class SequencePolicy(str, Enum):
    STATIC = "static"
    CYCLIC = "cyclic"
    GENERATOR = "generator"


@dataclass(frozen=True)
class GraphSequence:
    """One graph per window of length 1 + tau."""

    graphs: tuple[DirectedGraph, ...]
    policy: SequencePolicy = SequencePolicy.STATIC
    generator: Optional[Callable[[int], DirectedGraph]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.policy is SequencePolicy.GENERATOR:
            if self.generator is None:
                raise InvalidParameterError("generator policy needs a generator")
        elif not self.graphs:
            raise InvalidParameterError("a graph sequence needs at least one graph")
        sizes = {g.n for g in self.graphs}
        if len(sizes) > 1:
            raise InvalidParameterError(f"graphs in a sequence disagree on node count: {sizes}")

    @classmethod
    def static(cls, g: DirectedGraph) -> "GraphSequence":
        return cls((g,), SequencePolicy.STATIC)

    @property
    def n(self) -> int:
        return self.graph_at(0).n

    def graph_at(self, index: int) -> DirectedGraph:
        if self.policy is SequencePolicy.STATIC:
            return self.graphs[min(index, len(self.graphs) - 1)]
        if self.policy is SequencePolicy.CYCLIC:
            return self.graphs[index % len(self.graphs)]
        if index < len(self.graphs):
            return self.graphs[index]
        return self.generator(index)

    def materialize(self, windows: int) -> tuple[DirectedGraph, ...]:
        return tuple(self.graph_at(i) for i in range(windows))

    def map(self, fn: Callable[[DirectedGraph], DirectedGraph]) -> "GraphSequence":
        if self.policy is SequencePolicy.GENERATOR:
            return GraphSequence(
                tuple(fn(g) for g in self.graphs),
                self.policy,
                partial(_mapped_generator, self.generator, fn),
            )
        return GraphSequence(tuple(fn(g) for g in self.graphs), self.policy)


def _mapped_generator(gen, fn, index: int) -> DirectedGraph:
    return fn(gen(index))


# ---- structure --------------------------------------------------------------


@dataclass(frozen=True)
class GraphStats:
    min_indegree: int
    max_indegree: int
    has_isolated: bool
    strongly_connected: bool


def is_strongly_connected(g: DirectedGraph) -> bool:
    return nx.is_strongly_connected(g.to_networkx())


def graph_stats(g: DirectedGraph) -> GraphStats:
    """Degree summary; self-loops count toward indegree but not toward isolation."""
    indeg = [len(g.predecessors(v)) for v in range(g.n)]
    isolated = any(
        all(e.dst == v for e in g.successors(v)) and all(e.src == v for e in g.predecessors(v))
        for v in range(g.n)
    )
    return GraphStats(
        min_indegree=min(indeg),
        max_indegree=max(indeg),
        has_isolated=isolated,
        strongly_connected=is_strongly_connected(g),
    )


def graph_period(g: DirectedGraph) -> int:
    """Period of a strongly connected graph: gcd of level(u) + 1 - level(v) over all edges."""
    if not is_strongly_connected(g):
        raise NotStronglyConnectedError(f"{g!r} is not strongly connected")
    level = nx.single_source_shortest_path_length(g.to_networkx(), 0)
    period = 0
    for e in g.edges:
        period = math.gcd(period, abs(level[e.src] + 1 - level[e.dst]))
    return period


def is_aperiodic(g: DirectedGraph) -> bool:
    return graph_period(g) == 1


def coverage_depth(seq: GraphSequence | DirectedGraph, start_index: int = 0, d_max: int = 64):
    """Smallest d such that the successor maps of windows start..start+d-1, applied in
    order to every singleton, reach the whole node set. None if no d <= d_max works."""
    if d_max < 1:
        raise InvalidParameterError("d_max must be at least 1")
    if isinstance(seq, DirectedGraph):
        seq = GraphSequence.static(seq)
    n = seq.n
    reach = np.eye(n, dtype=np.int64)
    for d in range(1, d_max + 1):
        adj = seq.graph_at(start_index + d - 1).adjacency().astype(np.int64)
        reach = ((reach @ adj) > 0).astype(np.int64)
        if reach.all():
            return d
    return None


def max_coverage_depth(seq: GraphSequence, windows: int, d_max: int = 64):
    """Worst coverage depth over the first ``windows`` start indices, or None if any fails."""
    worst = 0
    for start in range(windows):
        d = coverage_depth(seq, start, d_max)
        if d is None:
            logger.debug(f"no coverage within {d_max} windows from window {start}")
            return None
        worst = max(worst, d)
    return worst


def weighted_condition(g: DirectedGraph, tau: float) -> bool:
    """Every node with an in-edge has total in-weight above tau."""
    for v in range(g.n):
        preds = g.predecessors(v)
        if preds and sum(e.weight for e in preds) <= tau:
            return False
    return True


def add_self_loops(g: DirectedGraph) -> DirectedGraph:
    loops = [Edge(v, v) for v in range(g.n) if not g.has_edge(v, v)]
    return DirectedGraph(g.n, list(g.edges) + loops, allow_self_loops=True)


def with_uniform_weight(g: DirectedGraph, weight: float) -> DirectedGraph:
    edges = [Edge(e.src, e.dst, weight, e.delay_scale) for e in g.edges]
    return DirectedGraph(g.n, edges, allow_self_loops=g.allow_self_loops)


# ---- generators -------------------------------------------------------------


def complete_graph(n: int) -> DirectedGraph:
    return _undirected(n, ((u, v) for u in range(n) for v in range(u + 1, n)))


def cycle_graph(n: int, bidirectional: bool = False) -> DirectedGraph:
    pairs = [(v, (v + 1) % n) for v in range(n)] if n > 1 else []
    if bidirectional:
        return _undirected(n, pairs if n > 2 else pairs[:1])
    return DirectedGraph(n, [Edge(u, v) for u, v in pairs])


def path_graph(n: int, bidirectional: bool = True) -> DirectedGraph:
    pairs = [(v, v + 1) for v in range(n - 1)]
    if bidirectional:
        return _undirected(n, pairs)
    return DirectedGraph(n, [Edge(u, v) for u, v in pairs])


def star_graph(n: int) -> DirectedGraph:
    return _undirected(n, ((0, v) for v in range(1, n)))


def grid_graph(w: int, h: int) -> DirectedGraph:
    return _undirected(w * h, _grid_pairs(w, h))


def _grid_pairs(w: int, h: int) -> list[tuple[int, int]]:
    pairs = []
    for y in range(h):
        for x in range(w):
            v = y * w + x
            if x + 1 < w:
                pairs.append((v, v + 1))
            if y + 1 < h:
                pairs.append((v, v + w))
    return pairs


def gen_binary_tree_triangle(depth: int) -> DirectedGraph:
    """Complete binary tree plus one chord closing a single triangle.

    The chord joins the two children of the root's left child; a depth-1 tree has
    none, so there it joins the root's two children.
    """
    if depth < 1:
        raise InvalidParameterError("depth must be at least 1")
    n = 2 ** (depth + 1) - 1
    pairs = [((v - 1) // 2, v) for v in range(1, n)]
    pairs.append((3, 4) if depth >= 2 else (1, 2))
    return _undirected(n, pairs)


def gen_random_geometric(
    n: int, radius: float, seed: int, max_retries: int = 200
) -> DirectedGraph:
    """Connected random geometric graph on the unit square."""
    if n < 1 or not 0 < radius <= math.sqrt(2) + 1e-12:
        raise InvalidParameterError(f"need n >= 1 and radius in (0, sqrt 2], got {n}, {radius}")
    rng = np.random.default_rng(seed)
    for attempt in range(max_retries):
        pos = rng.random((n, 2))
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if dist[u, v] <= radius]
        nxg = nx.Graph()
        nxg.add_nodes_from(range(n))
        nxg.add_edges_from(pairs)
        if nx.is_connected(nxg):
            if attempt:
                logger.debug(f"random geometric graph connected after {attempt + 1} draws")
            return _undirected(n, pairs)
    raise UnconnectableError(f"no connected draw for n={n} radius={radius} in {max_retries} tries")


def _grid_failure_window(w: int, h: int, fail: int, seed: int, index: int) -> DirectedGraph:
    rng = np.random.default_rng([seed, index])
    pairs = _grid_pairs(w, h)
    n = w * h
    for _ in range(1000):
        drop = set(rng.choice(len(pairs), size=fail, replace=False).tolist()) if fail else set()
        kept = [p for i, p in enumerate(pairs) if i not in drop]
        g = _undirected(n, kept)
        if not graph_stats(g).has_isolated:
            return g
    raise UnconnectableError(f"cannot drop {fail} edges from a {w}x{h} grid without isolation")


def gen_grid_with_failures(
    w: int, h: int, fail_per_window: int, seed: int, windows: int
) -> GraphSequence:
    """4-neighbour grid losing ``fail_per_window`` random edges, redrawn every window."""
    if w * h < 2:
        raise InvalidParameterError("grid needs at least two nodes")
    if fail_per_window >= len(_grid_pairs(w, h)) - (w * h - 1) + 1:
        raise InvalidParameterError("too many failures per window for this grid")
    window = partial(_grid_failure_window, w, h, fail_per_window, seed)
    graphs = tuple(window(i) for i in range(windows))
    return GraphSequence(graphs, SequencePolicy.GENERATOR, window)


def _random_tree_window(n: int, seed: int, index: int) -> DirectedGraph:
    rng = np.random.default_rng([seed, index])
    order = rng.permutation(n)
    pairs = [(int(order[rng.integers(i)]), int(order[i])) for i in range(1, n)]
    return _undirected(n, pairs)


def random_tree_sequence(n: int, seed: int, windows: int = 1) -> GraphSequence:
    """A fresh uniformly-attached random tree every window."""
    window = partial(_random_tree_window, n, seed)
    graphs = tuple(window(i) for i in range(windows))
    return GraphSequence(graphs, SequencePolicy.GENERATOR, window)


def random_aperiodic_digraph(
    n: int, p: float, seed: int, max_retries: int = 1000
) -> DirectedGraph:
    """Rejection-sampled strongly connected aperiodic digraph without self-loops."""
    if n < 3:
        raise InvalidParameterError(f"no aperiodic loop-free digraph on {n} nodes")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        mask = rng.random((n, n)) < p
        edges = [Edge(u, v) for u in range(n) for v in range(n) if u != v and mask[u, v]]
        g = DirectedGraph(n, edges)
        if is_strongly_connected(g) and graph_period(g) == 1:
            return g
    raise UnconnectableError(f"no strongly connected aperiodic draw for n={n} p={p}")


def random_connected_undirected(n: int, p: float, seed: int) -> DirectedGraph:
    """Random spanning tree plus independent extra edges with probability ``p``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[rng.integers(i)]), int(order[i])))) for i in range(1, n)}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                pairs.add((u, v))
    return _undirected(n, sorted(pairs))


def random_indegree_digraph(n: int, k: int, seed: int) -> DirectedGraph:
    """Every node draws ``k`` distinct predecessors uniformly at random."""
    if not 1 <= k <= n - 1:
        raise InvalidParameterError(f"indegree must lie in [1, {n - 1}], got {k}")
    rng = np.random.default_rng(seed)
    edges = []
    for v in range(n):
        others = np.array([u for u in range(n) if u != v])
        for u in rng.choice(others, size=k, replace=False):
            edges.append(Edge(int(u), v))
    return DirectedGraph(n, edges)


# ---- edge-list exchange format ----------------------------------------------

HEADER = "pco-graph v1"


def write_graph(g: DirectedGraph, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{HEADER} n={g.n}"]
    lines += [f"{e.src} {e.dst} {e.weight!r} {e.delay_scale!r}" for e in g.edges]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_graph(path: Path) -> DirectedGraph:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(HEADER + " n="):
        raise GraphFormatError(f"{path}: missing '{HEADER} n=<nodes>' header")
    n = int(lines[0].split("n=", 1)[1])
    edges = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3, 4):
            raise GraphFormatError(f"{path}:{lineno}: expected 'from to [weight [delay_scale]]'")
        src, dst = int(parts[0]), int(parts[1])
        rest = [float(x) for x in parts[2:]]
        edges.append(Edge(src, dst, *rest))
    self_loops = any(e.src == e.dst for e in edges)
    return DirectedGraph(n, edges, allow_self_loops=self_loops)


def write_sequence(seq: GraphSequence, directory: Path, windows: int | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graphs = seq.materialize(windows) if windows else seq.graphs
    files = []
    for i, g in enumerate(graphs):
        name = f"graph_{i:04d}.txt"
        write_graph(g, directory / name)
        files.append(name)
    policy = SequencePolicy.CYCLIC if seq.policy is SequencePolicy.GENERATOR else seq.policy
    manifest = {"format": "pco-graph-sequence v1", "policy": policy.value, "files": files}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def read_sequence(directory: Path) -> GraphSequence:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise GraphFormatError(f"{directory}: no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    graphs = tuple(read_graph(directory / name) for name in manifest["files"])
    return GraphSequence(graphs, SequencePolicy(manifest.get("policy", "cyclic")))
