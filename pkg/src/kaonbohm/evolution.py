"""Grid-based 1D Schrodinger evolution and polar decomposition.

The solver is Crank-Nicolson with hard-wall (zero Dirichlet) boundaries.
Internally it works in units where the grid spacing is 1 and time is
hbar t / (2 m dx^2), so the physical scales (fm widths, kg masses) never
enter the linear algebra.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import splu

from kaonbohm.constants import HBAR
from kaonbohm.errors import (
    GridMismatch,
    GridTooCoarse,
    NormDrift,
    PacketOutsideGrid,
    StabilityViolation,
)
from kaonbohm.packet import GaussianPacket, amplitude_at

NORM_ABORT = 1e-4
DEFAULT_NODE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_points < 16:
            raise ValueError("a grid needs at least 16 points")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @classmethod
    def around(cls, center: float, half_width: float, dx: float) -> SpatialGrid:
        """Grid of spacing ``dx`` covering center +- half_width."""
        n = int(math.ceil(2 * half_width / dx)) + 1
        return cls(center - half_width, center - half_width + (n - 1) * dx, n)


@dataclass(frozen=True)
class PotentialSpec:
    func: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "free"

    def values(self, x: np.ndarray) -> np.ndarray:
        if self.func is None:
            return np.zeros_like(x)
        v = np.asarray(self.func(x))
        if np.iscomplexobj(v) or v.shape != x.shape or not np.all(np.isfinite(v)):
            raise StabilityViolation(f"potential {self.label!r} must be real and finite on the grid")
        return v.astype(float)


FREE = PotentialSpec()


def harmonic_potential(mass: float, omega: float, center: float = 0.0) -> PotentialSpec:
    return PotentialSpec(lambda x: 0.5 * mass * omega**2 * (x - center) ** 2, f"harmonic(omega={omega})")


@dataclass(frozen=True, eq=False)
class GridWaveFunction:
    """Immutable snapshot of psi on a grid. ``mass`` is needed to evolve it."""

    grid: SpatialGrid
    amplitudes: np.ndarray
    time: float
    mass: float
    hbar: float = HBAR

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise ValueError("amplitudes must have one value per grid point")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(trapezoid(self.density, dx=self.grid.dx))

    def mean_position(self) -> float:
        x = self.grid.x
        return float(trapezoid(x * self.density, dx=self.grid.dx) / self.norm())

    def std_position(self) -> float:
        x = self.grid.x
        mu = self.mean_position()
        return float(math.sqrt(trapezoid((x - mu) ** 2 * self.density, dx=self.grid.dx) / self.norm()))

    def with_amplitudes(self, amplitudes: np.ndarray, time: float) -> GridWaveFunction:
        return GridWaveFunction(self.grid, amplitudes, time, self.mass, self.hbar)


def prepare_gaussian(grid: SpatialGrid, packet: GaussianPacket) -> GridWaveFunction:
    """Sample a 1D analytic packet at its preparation time and renormalize."""
    if packet.sigma0 < 4 * grid.dx:
        raise GridTooCoarse(f"sigma0={packet.sigma0:g} is below 4 dx={4 * grid.dx:g}")
    margin = 5 * packet.sigma0
    if packet.center - margin < grid.x_min or packet.center + margin > grid.x_max:
        raise PacketOutsideGrid("packet needs a 5 sigma0 margin inside the grid")
    amps = amplitude_at(packet, grid.x, packet.t0)
    amps = amps / math.sqrt(trapezoid(np.abs(amps) ** 2, dx=grid.dx))
    return GridWaveFunction(grid, amps, packet.t0, packet.mass, packet.hbar)


class CrankNicolson:
    """Reusable propagator for one (grid, potential, mass, dt) combination."""

    def __init__(self, grid: SpatialGrid, potential: PotentialSpec, mass: float, dt: float, hbar: float = HBAR):
        if not (dt > 0 and math.isfinite(dt)):
            raise StabilityViolation(f"time step must be positive and finite, got {dt}")
        self.grid = grid
        self.dt = dt
        dx = grid.dx
        dtau = hbar * dt / (2.0 * mass * dx**2)
        v_scaled = potential.values(grid.x)[1:-1] * (2.0 * mass * dx**2 / hbar**2)
        if not (math.isfinite(dtau) and np.all(np.isfinite(v_scaled))):
            raise StabilityViolation("scaled step or potential overflowed")
        n = grid.n_points - 2
        off = np.ones(n - 1)
        ham = sp.diags([-off, 2.0 + v_scaled, -off], [-1, 0, 1], format="csc")
        eye = sp.identity(n, format="csc")
        self._lhs = splu((eye + 0.5j * dtau * ham).tocsc())
        self._rhs = (eye - 0.5j * dtau * ham).tocsr()

    def step(self, amplitudes: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_points, dtype=complex)
        out[1:-1] = self._lhs.solve(self._rhs @ amplitudes[1:-1])
        return out


def _check_norm(psi: GridWaveFunction) -> None:
    drift = abs(psi.norm() - 1.0)
    if not drift <= NORM_ABORT:
        raise NormDrift(f"norm drifted by {drift:.3e}")


def evolve(
    psi: GridWaveFunction,
    potential: PotentialSpec | None,
    dt: float,
    n_steps: int,
) -> GridWaveFunction:
    """Advance ``psi`` by ``n_steps`` Crank-Nicolson steps of size ``dt``."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if n_steps == 0:
        return psi
    prop = CrankNicolson(psi.grid, potential or FREE, psi.mass, dt, psi.hbar)
    u = np.array(psi.amplitudes)
    for _ in range(n_steps):
        u = prop.step(u)
    out = psi.with_amplitudes(u, psi.time + n_steps * dt)
    _check_norm(out)
    return out


def evolve_snapshots(
    psi: GridWaveFunction,
    potential: PotentialSpec | None,
    dt: float,
    times: Sequence[float],
) -> list[GridWaveFunction]:
    """Snapshots at each requested time (rounded to whole steps of ``dt``)."""
    prop = CrankNicolson(psi.grid, potential or FREE, psi.mass, dt, psi.hbar)
    u = np.array(psi.amplitudes)
    n_done = 0
    out = []
    for t in times:
        n_target = int(round((t - psi.time) / dt))
        if n_target < n_done:
            raise ValueError("snapshot times must be non-decreasing")
        for _ in range(n_target - n_done):
            u = prop.step(u)
        n_done = n_target
        snap = psi.with_amplitudes(u, psi.time + n_done * dt)
        _check_norm(snap)
        out.append(snap)
    return out


def ground_state(grid: SpatialGrid, potential: PotentialSpec, mass: float, hbar: float = HBAR) -> GridWaveFunction:
    """Lowest eigenvector of the discrete Hamiltonian used by the solver."""
    dx = grid.dx
    v_scaled = potential.values(grid.x)[1:-1] * (2.0 * mass * dx**2 / hbar**2)
    n = grid.n_points - 2
    _, vecs = eigh_tridiagonal(2.0 + v_scaled, -np.ones(n - 1), select="i", select_range=(0, 0))
    amps = np.zeros(grid.n_points, dtype=complex)
    amps[1:-1] = np.abs(vecs[:, 0])
    amps /= math.sqrt(trapezoid(np.abs(amps) ** 2, dx=dx))
    return GridWaveFunction(grid, amps, 0.0, mass, hbar)


@dataclass(frozen=True, eq=False)
class PolarFields:
    grid: SpatialGrid
    amplitude: np.ndarray
    phase_gradient: np.ndarray
    node_mask: np.ndarray
    time: float = 0.0
    hbar: float = field(default=HBAR, repr=False)


def polar_decompose(psi: GridWaveFunction, node_threshold: float = DEFAULT_NODE_THRESHOLD) -> PolarFields:
    """R = |psi| and dS/dx on the grid.

    The gradient is the central difference of the phase, taken as
    arg(psi[j+1] * conj(psi[j-1])) / (2 dx). That needs no unwrapping and is
    exact for phases up to quadratic in x, which covers free Gaussians.
    """
    if not node_threshold > 0:
        raise ValueError("node_threshold must be positive")
    amps = psi.amplitudes
    dx = psi.grid.dx
    r = np.abs(amps)
    grad = np.empty(amps.size)
    grad[1:-1] = np.angle(amps[2:] * np.conj(amps[:-2])) / (2 * dx)
    grad[0] = np.angle(amps[1] * np.conj(amps[0])) / dx
    grad[-1] = np.angle(amps[-1] * np.conj(amps[-2])) / dx
    grad *= psi.hbar
    nodes = r < node_threshold * r.max()
    grad[nodes] = np.nan
    return PolarFields(psi.grid, r, grad, nodes, psi.time, psi.hbar)


def continuity_residual(psi_sequence: Sequence[GridWaveFunction], node_threshold: float = DEFAULT_NODE_THRESHOLD) -> float:
    """max |d rho/dt + d(rho v)/dx| over interior points, by central differences.

    Takes three snapshots at t - dt, t, t + dt. The current uses the velocity
    field (1/m) dS/dx from the middle snapshot.
    """
    before, mid, after = psi_sequence
    if not (before.grid == mid.grid == after.grid):
        raise GridMismatch("snapshots live on different grids")
    dt1 = mid.time - before.time
    dt2 = after.time - mid.time
    if not (dt1 > 0 and math.isclose(dt1, dt2, rel_tol=1e-9)):
        raise GridMismatch("snapshots must be equally spaced in time")
    polar = polar_decompose(mid, node_threshold)
    rho = mid.density
    current = rho * np.nan_to_num(polar.phase_gradient) / mid.mass
    drho_dt = (after.density - before.density) / (dt1 + dt2)
    dj_dx = (current[2:] - current[:-2]) / (2 * mid.grid.dx)
    resid = np.abs(drho_dt[1:-1] + dj_dx)
    usable = ~(polar.node_mask[2:] | polar.node_mask[1:-1] | polar.node_mask[:-2])
    return float(resid[usable].max()) if usable.any() else 0.0


def write_density_csv(psi: GridWaveFunction, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "rho_per_m", "re_psi", "im_psi"])
        for x, a in zip(psi.grid.x, psi.amplitudes):
            w.writerow([repr(float(x)), repr(float(abs(a) ** 2)), repr(float(a.real)), repr(float(a.imag))])
