"""Bohmian trajectories for free Gaussian packets.

Two routes are provided and checked against each other in the tests: the
guidance law integrated on a grid wavefunction, and the closed-form
trajectory x(t) = c + v dt + X0 s(dt) of a particle that started X0 away
from the packet center.

Lab-frame anchoring: the packet center sits at ``packet.center`` at the
emission time ``packet.t0``, and the particle starts at center + X0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from kaonbohm import streams
from kaonbohm.errors import NegativeElapsed, NodeRegion, NonPositiveElapsed, OutOfGrid
from kaonbohm.evolution import (
    FREE,
    CrankNicolson,
    GridWaveFunction,
    PolarFields,
    PotentialSpec,
    polar_decompose,
)
from kaonbohm.packet import GaussianPacket, spreading_factor

OFFSET_GUARD = 10.0


@dataclass(frozen=True)
class TrajectoryState:
    position: float | np.ndarray
    time: float


@dataclass(frozen=True, eq=False)
class FreeTrajectorySpec:
    packet: GaussianPacket
    offset: float | np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.offset) > OFFSET_GUARD * self.packet.sigma0):
            raise ValueError("offset lies beyond the 10 sigma0 sampling guard")

    @property
    def emission_time(self) -> float:
        return self.packet.t0


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    packet: GaussianPacket
    offsets: np.ndarray
    seed: int
    n_redrawn: int

    def __len__(self):
        return len(self.offsets)

    def specs(self):
        return [FreeTrajectorySpec(self.packet, o) for o in self.offsets]


@dataclass(frozen=True, eq=False)
class Path:
    t: np.ndarray
    x: np.ndarray


def free_position(spec: FreeTrajectorySpec, t2: float):
    """Closed-form position at ``t2``; vectorized over array offsets."""
    elapsed = t2 - spec.emission_time
    if np.any(np.asarray(elapsed) < 0):
        raise NegativeElapsed(f"t2={t2} precedes emission at {spec.emission_time}")
    p = spec.packet
    return p.center + p.velocity * elapsed + np.asarray(spec.offset) * p.spreading_factor(elapsed)


def transport_offsets(packet: GaussianPacket, offsets: np.ndarray, t2):
    """Positions at ``t2`` of many particles sharing ``packet``."""
    elapsed = t2 - packet.t0
    if np.any(np.asarray(elapsed) < 0):
        raise NegativeElapsed("transport time precedes emission")
    return packet.center + packet.velocity * elapsed + np.asarray(offsets) * packet.spreading_factor(elapsed)


def invert_offset(hit_position, hit_time: float, packet: GaussianPacket, t1):
    """Initial offset X0 that lands on ``hit_position`` at ``hit_time`` if emitted at ``t1``.

    ``packet.center`` is taken as the emission center; ``packet.t0`` is
    ignored in favour of the hypothesized ``t1`` (which may be an array).
    """
    elapsed = hit_time - np.asarray(t1, dtype=float)
    if np.any(elapsed <= 0):
        raise NonPositiveElapsed("hypothesized emission must precede the hit")
    s = packet.spreading_factor(elapsed)
    return (hit_position - packet.center - packet.velocity * elapsed) / s


def emission_center(hit_position, hit_time, velocity, offset, t1, sigma0, mass, hbar):
    """Packet center at emission implied by a hit, a sampled offset and a hypothesized t1.

    Broadcasts over leading axes of ``t1`` and ``offset``; the last axis of
    positions holds coordinates.
    """
    elapsed = hit_time - np.asarray(t1, dtype=float)
    s = spreading_factor(elapsed, sigma0, mass, hbar)
    return hit_position - velocity * elapsed[..., None] - offset * s[..., None]


def draw_offsets(rng: np.random.Generator, sigma0: float, shape) -> tuple[np.ndarray, int]:
    """Normal(0, sigma0^2) draws with values beyond 10 sigma0 re-drawn; returns (values, n_redrawn)."""
    z = rng.standard_normal(shape)
    redrawn = 0
    bad = np.abs(z) > OFFSET_GUARD
    while bad.any():
        k = int(bad.sum())
        redrawn += k
        z[bad] = rng.standard_normal(k)
        bad = np.abs(z) > OFFSET_GUARD
    return z * sigma0, redrawn


def sample_ensemble(packet: GaussianPacket, n: int, seed: int) -> TrajectoryEnsemble:
    if n < 1:
        raise ValueError("ensemble needs at least one member")
    shape = (n,) if np.ndim(packet.center) == 0 else (n, packet.ndim)
    offsets, redrawn = draw_offsets(streams.substream(seed, streams.OFFSETS), packet.sigma0, shape)
    offsets.setflags(write=False)
    return TrajectoryEnsemble(packet, offsets, seed, redrawn)


def guidance_velocity(polar: PolarFields, x, mass: float):
    """(1/m) dS/dx, linearly interpolated to ``x`` (scalar or array)."""
    xs = polar.grid.x
    xq = np.asarray(x, dtype=float)
    if np.any((xq < xs[0]) | (xq > xs[-1])):
        raise OutOfGrid(f"position outside [{xs[0]:g}, {xs[-1]:g}]")
    j = np.clip(np.floor((xq - xs[0]) / polar.grid.dx).astype(int), 0, xs.size - 2)
    if np.any(polar.node_mask[j] | polar.node_mask[j + 1]):
        raise NodeRegion("guidance field undefined near a node of psi")
    v = np.interp(xq, xs, polar.phase_gradient) / mass
    return float(v) if v.ndim == 0 else v


def integrate_trajectory(
    psi0: GridWaveFunction,
    potential: PotentialSpec | None,
    start: TrajectoryState,
    dt: float,
    n_steps: int,
) -> Path:
    """Co-evolve psi and particle positions with the explicit midpoint rule.

    ``start.position`` may be an array to move many particles through the
    same wavefunction. The guidance field at the half step comes from the
    average of psi at the two bracketing solver steps.
    """
    prop = CrankNicolson(psi0.grid, potential or FREE, psi0.mass, dt, psi0.hbar)
    x = np.array(start.position, dtype=float)
    u = np.array(psi0.amplitudes)
    t0 = psi0.time
    times = t0 + dt * np.arange(n_steps + 1)
    path = np.empty((n_steps + 1,) + x.shape)
    path[0] = x
    m = psi0.mass
    for n in range(n_steps):
        u_next = prop.step(u)
        k1 = guidance_velocity(polar_decompose(psi0.with_amplitudes(u, times[n])), x, m)
        half = psi0.with_amplitudes(0.5 * (u + u_next), times[n] + 0.5 * dt)
        k2 = guidance_velocity(polar_decompose(half), x + 0.5 * dt * k1, m)
        x = x + dt * k2
        path[n + 1] = x
        u = u_next
    return Path(times, path)


def write_trajectories(path, paths) -> None:
    """CSV dump: trajectory_id, t_s, x_m (and y_m for planar paths).

    ``paths`` is a sequence of Path objects; a Path whose ``x`` has shape
    (n_t, k) contributes k trajectories (or k planar ones when x is (n_t, k, 2)).
    """
    rows = []
    planar = False
    tid = 0
    for p in paths:
        x = np.asarray(p.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        planar = planar or x.ndim == 3
        for j in range(x.shape[1]):
            for t, xj in zip(p.t, x[:, j]):
                rows.append([tid, repr(float(t)), *(repr(float(v)) for v in np.atleast_1d(xj))])
            tid += 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory_id", "t_s", "x_m", "y_m"] if planar else ["trajectory_id", "t_s", "x_m"])
        w.writerows(rows)
