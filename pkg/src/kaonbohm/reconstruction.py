"""Decay-vertex and decay-time retrodiction from two pion hits.

Classical mode back-propagates straight lines along the measured momenta
and intersects them. Bohmian mode samples initial offsets for both pions,
inverts the closed-form trajectory for the emission center as a function
of a hypothesized decay time t1, and picks the t1 at which the two implied
centers come closest.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from kaonbohm import streams
from kaonbohm.constants import HBAR
from kaonbohm.errors import EmptyCloud, NoMinimumInWindow, ParallelLines, VertexBehindSource
from kaonbohm.simulator import Hit
from kaonbohm.trajectories import draw_offsets, emission_center

QUANTILE_LEVELS = (0.01, 0.05, 0.50, 0.95, 0.99)
PARALLEL_SIN = 1e-6
PAIRINGS = ("independent", "anticorrelated")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SCAN_POINTS = 64


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    event_id: int
    mode: str
    vertex: np.ndarray
    vertex_cloud: np.ndarray
    kaon_momentum: np.ndarray
    t1: float
    t1_samples: np.ndarray
    n_failed: int = 0
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class DecayTimeSpread:
    mean: float
    std: float
    quantiles: dict = field(default_factory=dict)


def closest_point(points: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares point nearest to the lines p_i + s d_i; returns (point, rms distance)."""
    points = np.asarray(points, dtype=float)
    dirs = np.asarray(directions, dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    if len(dirs) == 2:
        d0, d1 = dirs
        sin = abs(d0[0] * d1[1] - d0[1] * d1[0]) if dirs.shape[1] == 2 else np.linalg.norm(np.cross(d0, d1))
        if sin < PARALLEL_SIN:
            raise ParallelLines(f"track directions are parallel (sin={sin:.2e})")
    dim = points.shape[1]
    proj = np.eye(dim)[None] - dirs[:, :, None] * dirs[:, None, :]
    lhs = proj.sum(axis=0)
    rhs = np.einsum("nij,nj->i", proj, points)
    x = np.linalg.solve(lhs, rhs)
    dist = np.einsum("nij,nj->ni", proj, x[None] - points)
    return x, float(np.sqrt(np.mean(np.sum(dist**2, axis=1))))


def classical_retrodict(
    hits: Sequence[Hit],
    *,
    kaon_mass: float,
    source,
    direction,
    event_id: int = 0,
    allow_unphysical: bool = False,
) -> ReconstructionResult:
    """Intersect straight back-propagated tracks and time the kaon flight classically."""
    h1, h2 = hits
    vertex, resid = closest_point(np.array([h1.pos, h2.pos]), np.array([h1.p, h2.p]))
    pk = np.asarray(h1.p) + np.asarray(h2.p)
    speed = float(np.linalg.norm(pk)) / kaon_mass
    direction = np.asarray(direction, dtype=float)
    t1 = float((vertex - np.asarray(source, dtype=float)) @ direction) / speed
    result = ReconstructionResult(event_id, "classical", vertex, vertex[None, :], pk, t1, np.array([t1]), 0, resid, 1)
    if t1 < 0 and not allow_unphysical:
        raise VertexBehindSource(f"event {event_id}: reconstructed vertex lies behind the source", result)
    return result


def golden_section_min(f, lo, hi, tol):
    """Vectorized golden-section search; every element has its own bracket.

    ``f`` maps an array of abscissae to objective values of the same shape.
    Returns (argmin, fmin, iterations).
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = f(c)
    fd = f(d)
    it = 0
    while True:
        active = (b - a) > tol
        # stop once the bracket is a handful of ulps wide
        active &= (b - a) > 4 * np.spacing(np.maximum(np.abs(a), np.abs(b)))
        if not active.any() or it > 500:
            break
        it += 1
        left = (fc < fd) & active
        right = ~left & active
        b = np.where(left, d, b)
        a = np.where(right, c, a)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        # reuse the surviving interior point, evaluate only the new one
        c_next = np.where(left, new_c, np.where(right, d, c))
        d_next = np.where(left, c, np.where(right, new_d, d))
        probe = np.where(left, c_next, d_next)
        fp = f(probe)
        fc_next = np.where(left, fp, np.where(right, fd, fc))
        fd_next = np.where(left, fc, np.where(right, fp, fd))
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    x = np.where(fc < fd, c, d)
    return x, np.minimum(fc, fd), it


def _untimed_arrival_times(hits, kaon_mass, source, direction, pion_mass):
    classical = classical_retrodict(hits, kaon_mass=kaon_mass, source=source, direction=direction, allow_unphysical=True)
    return np.array(
        [classical.t1 + np.linalg.norm(h.pos - classical.vertex) / (np.linalg.norm(h.p) / pion_mass) for h in hits]
    )


def bohmian_retrodict(
    hits: Sequence[Hit],
    *,
    pion_mass: float,
    sigma0: float,
    n_samples: int,
    seed: int,
    event_id: int = 0,
    hbar: float = HBAR,
    t1_tol: float = 1e-15,
    offsets: np.ndarray | None = None,
    timed: bool = True,
    kaon_mass: float | None = None,
    source=None,
    direction=None,
    pairing: str = "independent",
) -> ReconstructionResult:
    """Ensemble retrodiction through the inverted closed-form trajectory.

    ``offsets`` (shape (n, 2, 2): sample, pion, coordinate) overrides the
    sampled offsets; it exists for roundtrip checks against simulator truth.
    ``t1_tol`` is relative to the search window (0, min t2).
    ``pairing="anticorrelated"`` gives the second pion the mirrored offset
    of the first instead of an independent draw.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    h1, h2 = hits
    pos = np.array([h1.pos, h2.pos], dtype=float)
    mom = np.array([h1.p, h2.p], dtype=float)
    vel = mom / pion_mass
    if abs(vel[0, 0] * vel[1, 1] - vel[0, 1] * vel[1, 0]) < PARALLEL_SIN * np.linalg.norm(vel[0]) * np.linalg.norm(vel[1]):
        raise ParallelLines(f"event {event_id}: track directions are parallel")
    if timed:
        t2 = np.array([h1.t2, h2.t2], dtype=float)
    else:
        if kaon_mass is None or source is None or direction is None:
            raise ValueError("untimed mode needs kaon_mass, source and direction")
        t2 = _untimed_arrival_times(hits, kaon_mass, source, direction, pion_mass)

    if offsets is None:
        rng = streams.substream(seed, event_id, streams.RETRODICTION)
        if pairing == "independent":
            offsets, _ = draw_offsets(rng, sigma0, (n_samples, 2, 2))
        elif pairing == "anticorrelated":
            first, _ = draw_offsets(rng, sigma0, (n_samples, 1, 2))
            offsets = np.concatenate([first, -first], axis=1)
        else:
            raise ValueError(f"unknown offset pairing {pairing!r}")
    else:
        offsets = np.asarray(offsets, dtype=float).reshape(-1, 2, 2)
    n = len(offsets)

    def centers(t1):
        c1 = emission_center(pos[0], t2[0], vel[0], offsets[..., 0, :], t1, sigma0, pion_mass, hbar)
        c2 = emission_center(pos[1], t2[1], vel[1], offsets[..., 1, :], t1, sigma0, pion_mass, hbar)
        return c1, c2

    def objective(t1):
        c1, c2 = centers(t1)
        return np.sum((c1 - c2) ** 2, axis=-1)

    lo_w, hi_w = 0.0, float(t2.min())
    if not hi_w > 0:
        raise NoMinimumInWindow(f"event {event_id}: arrival precedes the source time")
    # coarse scan picks the basin, golden section refines within it
    grid = lo_w + (hi_w - lo_w) * (np.arange(SCAN_POINTS) + 0.5) / SCAN_POINTS
    scan = np.stack([objective(np.full(n, g)) for g in grid], axis=1)
    j = np.argmin(scan, axis=1)
    step = (hi_w - lo_w) / SCAN_POINTS
    lo = np.maximum(lo_w, grid[j] - step)
    hi = np.minimum(hi_w, grid[j] + step)
    tol = t1_tol * (hi_w - lo_w)
    t1, fmin, iters = golden_section_min(objective, lo, hi, tol)

    # a minimizer pinned to the window edge is not an interior minimum
    edge = 10 * tol + 4 * np.spacing(hi_w)
    ok = (t1 - lo_w > edge) & (hi_w - t1 > edge)
    n_failed = int(n - ok.sum())
    c1, c2 = centers(t1)
    cloud = 0.5 * (c1 + c2)[ok]
    t1_ok = t1[ok]
    resid = float(np.median(np.sqrt(fmin[ok]))) if ok.any() else math.nan
    vertex = cloud.mean(axis=0) if ok.any() else np.full(2, np.nan)
    t_est = float(t1_ok.mean()) if ok.any() else math.nan
    return ReconstructionResult(event_id, "bohmian", vertex, cloud, mom.sum(axis=0), t_est, t1_ok, n_failed, resid, iters)


def decay_time_spread(result: ReconstructionResult) -> DecayTimeSpread:
    t = np.asarray(result.t1_samples, dtype=float)
    if t.size == 0:
        raise EmptyCloud(f"event {result.event_id}: no decay-time samples")
    qs = np.quantile(t, QUANTILE_LEVELS)
    return DecayTimeSpread(float(t.mean()), float(t.std()), {lv: float(q) for lv, q in zip(QUANTILE_LEVELS, qs)})
