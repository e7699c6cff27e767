"""Closed-form maps for the strong resetting and strong firing dynamics.

They hold only inside the basin and with no pulses in flight; the engine is
checked against them (``pcosync oracle-check``).
"""

from __future__ import annotations

import heapq
import math
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from pcosync.core import PreconditionViolated
from pcosync.graphs import DirectedGraph, GraphSequence

PhaseVector = NDArray[np.float64]


def range_of(phi: Sequence[float]) -> float:
    """Circular range: 1 minus the largest gap between cyclically sorted phases."""
    x = np.sort(np.mod(np.asarray(phi, dtype=float), 1.0))
    if x.size <= 1:
        return 0.0
    gaps = np.diff(x)
    wrap = 1.0 - x[-1] + x[0]
    return float(max(0.0, 1.0 - max(gaps.max(), wrap)))


def window_frame(phi: Sequence[float], delta: float = 0.0) -> tuple[PhaseVector, float]:
    """Rotate phases so the leading oscillator sits at ``1 - delta``.

    Returns the rotated vector (unwrapped, all values within one range of the
    leader) and the rotation ``s`` such that ``rotated = phi + s (mod 1)``.
    """
    x = np.mod(np.asarray(phi, dtype=float), 1.0)
    if x.size == 0:
        return x, 0.0
    order = np.sort(x)
    gaps = np.append(np.diff(order), 1.0 - order[-1] + order[0])
    start = order[(int(np.argmax(gaps)) + 1) % order.size]
    rel = np.mod(x - start, 1.0)
    rho = float(rel.max())
    offset = 1.0 - delta - rho
    return rel + offset, math.fmod(offset - start + 1.0, 1.0)


def _check_basin(phi: PhaseVector, tau: float, B0: float) -> None:
    rho = range_of(phi)
    limit = min(B0 - tau, 1.0 - B0 + tau)
    if rho >= limit:
        raise PreconditionViolated(f"range {rho:.6g} outside the basin radius {limit:.6g}")


def sr_time_map(phi: Sequence[float], g: DirectedGraph, tau: float, B0: float) -> PhaseVector:
    """Time-(1 + tau) map under strong resetting: min(phi_i + tau, min over P(i) of phi_j)."""
    x = np.asarray(phi, dtype=float)
    if x.size != g.n:
        raise PreconditionViolated(f"{x.size} phases for a graph of {g.n} nodes")
    _check_basin(x, tau, B0)
    out = x + tau
    for v in range(g.n):
        for e in g.predecessors(v):
            out[v] = min(out[v], x[e.src])
    return out


def sf_next_fire_times(
    phi: Sequence[float], g: DirectedGraph, tau: float, t0: float = 0.0
) -> list[float]:
    """Least fixed point of lambda_i = min(t0 + 1 - phi_i, min over P(i) of lambda_j + tau).

    Solved by label-correcting relaxation from the intrinsic firing times.
    """
    if not g.is_undirected():
        raise PreconditionViolated("strong firing map needs every edge in both directions")
    x = np.asarray(phi, dtype=float)
    lam = [t0 + 1.0 - float(p) for p in x]
    heap = [(t, v) for v, t in enumerate(lam)]
    heapq.heapify(heap)
    while heap:
        t, u = heapq.heappop(heap)
        if t > lam[u]:
            continue
        for e in g.successors(u):
            cand = t + tau * e.delay_scale
            if cand < lam[e.dst]:
                lam[e.dst] = cand
                heapq.heappush(heap, (cand, e.dst))
    return lam


def iterate_sr(
    phi: Sequence[float], graphs: DirectedGraph | GraphSequence, tau: float, B0: float, k: int
) -> list[PhaseVector]:
    """Trajectory of ``k`` windows under strong resetting, first entry the start vector."""
    seq = GraphSequence.static(graphs) if isinstance(graphs, DirectedGraph) else graphs
    x = np.asarray(phi, dtype=float)
    trajectory = [x.copy()]
    for step in range(k):
        x = sr_time_map(x, seq.graph_at(step), tau, B0)
        x = x - math.floor(x.min())
        trajectory.append(x.copy())
    return trajectory
