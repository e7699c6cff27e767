"""Phase arithmetic and the phase response curve (PRC) family.

Every curve is an immutable value; evaluation is pure. Curves are dispatched
on their dataclass type through ``eval_prc``.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from functools import cached_property, singledispatch
import math
from typing import Union

import numpy as np

from pcosync.config import DEFAULT_S2_SAMPLES, PHASE_TOL


class PcoError(Exception):
    """Base class for every error raised by pcosync."""


class InvalidParameterError(PcoError, ValueError):
    pass


class PreconditionViolated(PcoError):
    pass


class NotS2Error(PcoError):
    """A curve failed one of the strong type II clauses."""

    def __init__(self, clause: str, phase: float, detail: str = ""):
        self.clause = clause
        self.phase = phase
        msg = f"clause ({clause}) violated at phase {phase:.6g}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


# ---- curve variants ---------------------------------------------------------


@dataclass(frozen=True)
class StrongReset:
    B0: float


@dataclass(frozen=True)
class StrongFire:
    B0: float


@dataclass(frozen=True)
class MirolloStrogatz:
    b: float = 3.0
    eps: float = 0.05

    def __post_init__(self):
        if self.b <= 0 or self.eps <= 0:
            raise InvalidParameterError("MirolloStrogatz needs b > 0 and eps > 0")


@dataclass(frozen=True)
class PiecewiseLinear:
    """Curve through ``(phase, f)`` vertices.

    Phases are non-decreasing from 0 to 1. A phase listed twice is a jump: the
    first value holds at the jump phase itself (left-closed), the second just
    after it.
    """

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(p), float(v)) for p, v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 2:
            raise InvalidParameterError("piecewise-linear curve needs at least two vertices")
        phases = [p for p, _ in verts]
        if abs(phases[0]) > PHASE_TOL or abs(phases[-1] - 1.0) > PHASE_TOL:
            raise InvalidParameterError("breakpoints must start at phase 0 and end at phase 1")
        for i in range(1, len(phases)):
            if phases[i] < phases[i - 1]:
                raise InvalidParameterError(f"breakpoint {i} at {phases[i]} decreases in phase")
            if i >= 2 and phases[i] == phases[i - 1] == phases[i - 2]:
                raise InvalidParameterError(f"phase {phases[i]} listed more than twice")

    @cached_property
    def phases(self) -> list[float]:
        return [p for p, _ in self.vertices]

    @cached_property
    def values(self) -> list[float]:
        return [v for _, v in self.vertices]


@dataclass(frozen=True)
class StrongTypeII:
    curve: PiecewiseLinear
    kappa: float
    B0: float
    B1: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidParameterError("kappa must be positive")
        if not self.B0 <= self.B1 < 1:
            raise InvalidParameterError("S2 curve needs B0 <= B1 < 1")


@dataclass(frozen=True)
class Weighted:
    inner: "PrcSpec"
    w: float

    def __post_init__(self):
        if not 0 < self.w <= inhibitory_bound(self.inner) + PHASE_TOL:
            raise InvalidParameterError(
                f"weight {self.w} outside (0, B0={inhibitory_bound(self.inner)}]"
            )


PrcSpec = Union[StrongReset, StrongFire, StrongTypeII, MirolloStrogatz, PiecewiseLinear, Weighted]


@dataclass(frozen=True)
class S2Params:
    kappa: float
    B0: float
    B1: float
    tau_ref: float

    @property
    def epsilon(self) -> float:
        return min(self.tau_ref, self.kappa)

    @property
    def basin(self) -> float:
        return basin_bound(self.B0, self.B1, self.tau_ref)


# ---- evaluation -------------------------------------------------------------


def _ms_v(phi: float, b: float) -> float:
    return math.log1p(math.expm1(b) * phi) / b


def _ms_v_inv(y: float, b: float) -> float:
    return math.expm1(b * y) / math.expm1(b)


@singledispatch
def eval_prc(prc, phi: float) -> float:
    """Phase offset f(phi) the curve applies to a pulse received at ``phi``."""
    raise InvalidParameterError(f"unknown PRC variant {type(prc).__name__}")


@eval_prc.register
def _(prc: StrongReset, phi: float) -> float:
    return -phi if phi <= prc.B0 + PHASE_TOL else 0.0


@eval_prc.register
def _(prc: StrongFire, phi: float) -> float:
    return -phi if phi <= prc.B0 + PHASE_TOL else 1.0 - phi


@eval_prc.register
def _(prc: MirolloStrogatz, phi: float) -> float:
    return _ms_v_inv(prc.eps + _ms_v(phi, prc.b), prc.b) - phi


@eval_prc.register
def _(prc: PiecewiseLinear, phi: float) -> float:
    phases = prc.phases
    values = prc.values
    k = bisect_left(phases, phi - PHASE_TOL)
    if k >= len(phases):
        return values[-1]
    if phases[k] <= phi + PHASE_TOL:
        return values[k]
    p0, v0 = phases[k - 1], values[k - 1]
    p1, v1 = phases[k], values[k]
    return v0 + (v1 - v0) * (phi - p0) / (p1 - p0)


@eval_prc.register
def _(prc: StrongTypeII, phi: float) -> float:
    return eval_prc(prc.curve, phi)


@eval_prc.register
def _(prc: Weighted, phi: float) -> float:
    if phi <= prc.w + PHASE_TOL:
        return -phi
    inner = eval_prc(prc.inner, phi)
    if phi <= inhibitory_bound(prc.inner) + PHASE_TOL:
        return max(inner, -prc.w)
    return inner


def apply_prc(phi: float, prc: PrcSpec) -> tuple[float, bool]:
    """Apply one received pulse. Returns ``(new_phase, fired)``.

    Excitation reaching phase 1 fires the oscillator at this instant (phase 0);
    phases never wrap.
    """
    candidate = phi + eval_prc(prc, phi)
    if candidate >= 1.0 - PHASE_TOL:
        return 0.0, True
    return max(candidate, 0.0), False


def inhibitory_bound(prc: PrcSpec) -> float:
    """End B0 of the inhibitory band of ``prc``."""
    if isinstance(prc, (StrongReset, StrongFire, StrongTypeII)):
        return prc.B0
    if isinstance(prc, Weighted):
        return inhibitory_bound(prc.inner)
    if isinstance(prc, PiecewiseLinear):
        b0 = 0.0
        for (p0, v0), (p1, v1) in zip(prc.vertices, prc.vertices[1:]):
            if v1 < 0:
                b0 = p1
            elif v0 < 0:
                b0 = p0 + (p1 - p0) * (-v0) / (v1 - v0) if p1 > p0 else p0
        return b0
    return 0.0


# ---- basin and S2 validation ------------------------------------------------


def basin_bound(B0: float, B1: float, tau: float) -> float:
    """Radius of the provable basin of synchrony, min(B0 - tau, 1 - B1 + tau)."""
    if not (tau < B0 <= B1 < 1):
        raise InvalidParameterError(f"need tau < B0 <= B1 < 1, got tau={tau} B0={B0} B1={B1}")
    return min(B0 - tau, 1.0 - B1 + tau)


def _as_samples(prc: PrcSpec, samples: int) -> PiecewiseLinear:
    grid = np.linspace(0.0, 1.0, samples + 1)
    grid[-1] = 1.0 - PHASE_TOL
    knots = []
    if isinstance(prc, (StrongReset, StrongFire)):
        knots.append(prc.B0)
    if isinstance(prc, Weighted):
        knots.extend([prc.w, inhibitory_bound(prc.inner)])
    grid = np.unique(np.concatenate([grid, knots]))
    verts = [(float(p), eval_prc(prc, float(p))) for p in grid]
    verts[-1] = (1.0, verts[-1][1])
    return PiecewiseLinear(tuple(verts))


def _segments(curve: PiecewiseLinear):
    return list(zip(curve.vertices, curve.vertices[1:]))


def validate_s2(prc: PrcSpec, tau: float, samples: int = DEFAULT_S2_SAMPLES) -> S2Params:
    """Check the strong type II clauses and return the tightest parameters.

    (a) reset zone: f = -phi on [0, tau + kappa];
    (b) f <= -tau - kappa on [tau + kappa, B0];
    (c) f >= 0 on (B1, 1).

    Piecewise-linear curves are checked exactly on their vertices; other forms
    are sampled on ``samples`` points plus their known breakpoints.
    """
    if not 0 < tau < 0.5:
        raise InvalidParameterError(f"tau must lie in (0, 0.5), got {tau}")
    if isinstance(prc, StrongTypeII):
        curve = prc.curve
    elif isinstance(prc, PiecewiseLinear):
        curve = prc
    else:
        curve = _as_samples(prc, samples)
    segs = _segments(curve)

    # (a): walk forward while the curve sits on f = -phi
    reset_end = 0.0
    for (p0, v0), (p1, v1) in segs:
        if abs(v0 + p0) <= PHASE_TOL and abs(v1 + p1) <= PHASE_TOL:
            reset_end = p1
            continue
        if abs(v0 + p0) <= PHASE_TOL:
            reset_end = p0
        break
    if reset_end <= tau + PHASE_TOL:
        bad = next((p for p, v in curve.vertices if p > reset_end and abs(v + p) > PHASE_TOL), tau)
        raise NotS2Error("a", bad, f"reset zone ends at {reset_end:.6g}, not beyond tau={tau}")
    kappa = reset_end - tau
    limit = -tau - kappa

    # (b): extend the inhibitory band while f stays at or below -tau - kappa
    B0 = reset_end
    for (p0, v0), (p1, v1) in segs:
        if p1 <= reset_end:
            continue
        if v0 > limit + PHASE_TOL and p0 >= reset_end:
            break
        if v1 <= limit + PHASE_TOL:
            B0 = p1
            continue
        if v0 <= limit + PHASE_TOL and p1 > p0:
            B0 = p0 + (p1 - p0) * (limit - v0) / (v1 - v0)
        break
    B0 = min(B0, 1.0 - PHASE_TOL)

    # (c): B1 opens the strictly excitatory tail; a flat zero stretch counts as sleep
    if curve.vertices[-1][1] <= PHASE_TOL:
        raise NotS2Error("c", 1.0, "no excitatory tail below phase 1")
    B1 = 0.0
    for (p0, v0), (p1, v1) in reversed(segs):
        if v0 > PHASE_TOL:
            continue
        if p1 > p0:
            B1 = p0 + (p1 - p0) * (-v0) / (v1 - v0)
        else:
            B1 = p1
        break
    B1 = max(B1, B0)
    if B1 >= 1.0:
        raise NotS2Error("c", B1, "no excitatory tail below phase 1")
    return S2Params(kappa=kappa, B0=B0, B1=B1, tau_ref=tau)


# ---- presets ----------------------------------------------------------------


def prc_from_vertices(vertices) -> PiecewiseLinear:
    return PiecewiseLinear(tuple((float(p), float(v)) for p, v in vertices))


def s2_curve(B0: float, B1: float, tau: float, kappa: float, excite: float = 0.5) -> StrongTypeII:
    """Piecewise-linear S2 curve: reset on [0, tau+kappa], flat -(tau+kappa) up to B0,
    zero on (B0, B1], linear excitation rising to ``excite`` at phase 1."""
    reset = tau + kappa
    if not (kappa > 0 and reset <= B0 + PHASE_TOL and B0 <= B1 < 1):
        raise InvalidParameterError(
            f"need tau + kappa <= B0 <= B1 < 1, got tau={tau} kappa={kappa} B0={B0} B1={B1}"
        )
    verts = [(0.0, 0.0), (reset, -reset)]
    if B0 > reset + PHASE_TOL:
        verts.append((B0, -reset))
    verts.append((B0, 0.0))
    if B1 > B0 + PHASE_TOL:
        verts.append((B1, 0.0))
    verts.append((1.0, excite))
    return StrongTypeII(curve=prc_from_vertices(verts), kappa=kappa, B0=B0, B1=B1)


def limited_reset(B0: float, depth: float = 0.1) -> PiecewiseLinear:
    """Strong resetting clipped at ``-depth``: f = max(-phi, -depth) up to B0, else 0."""
    if not 0 < depth < B0 < 1:
        raise InvalidParameterError(f"need 0 < depth < B0 < 1, got depth={depth} B0={B0}")
    return prc_from_vertices([(0, 0), (depth, -depth), (B0, -depth), (B0, 0), (1, 0)])


def partial_reset(B0: float, gain: float = 0.5) -> PiecewiseLinear:
    """f = -gain * phi up to B0, else 0: pulls the phase part way toward zero."""
    if not (0 < gain < 1 and 0 < B0 < 1):
        raise InvalidParameterError(f"need 0 < gain < 1 and 0 < B0 < 1, got {gain}, {B0}")
    return prc_from_vertices([(0, 0), (B0, -gain * B0), (B0, 0), (1, 0)])


def indegree_scaled_reset(tau: float, k: int, B0: float) -> Weighted:
    """Curve resetting only on [0, tau/k], for graphs whose indegree is at least ``k``."""
    if k < 1:
        raise InvalidParameterError("indegree k must be at least 1")
    return Weighted(inner=StrongReset(B0), w=tau / k)


PRESETS = ("sr", "sf", "s2-default", "ms", "limited-reset", "partial-reset")


def make_preset(name: str, tau: float, **overrides: float) -> PrcSpec:
    """Named curve tuned to delay ``tau``.

    Overrides: B0, B1, kappa, excite, b, eps, depth, gain.
    """
    B0 = overrides.get("B0", 0.5 + tau)
    if name == "sr":
        return StrongReset(B0)
    if name == "sf":
        return StrongFire(B0)
    if name == "s2-default":
        B1 = overrides.get("B1", B0)
        kappa = overrides.get("kappa", min(tau, B0 - tau))
        return s2_curve(B0, B1, tau, kappa, overrides.get("excite", 0.5))
    if name == "ms":
        return MirolloStrogatz(b=overrides.get("b", 3.0), eps=overrides.get("eps", 0.05))
    if name == "limited-reset":
        return limited_reset(B0, overrides.get("depth", 0.1))
    if name == "partial-reset":
        return partial_reset(B0, overrides.get("gain", 0.5))
    raise InvalidParameterError(f"unknown PRC preset {name!r}; choose from {', '.join(PRESETS)}")
