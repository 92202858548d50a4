"""Oracle suites run by ``kaonbohm validate``.

Each check compares one computational route against an independent one:
the grid solver against the closed-form packet, integrated guidance
trajectories against the closed-form trajectory, transported ensembles
against the evolved density, and reconstruction against simulator truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from kaonbohm.constants import HBAR, PION_MASS
from kaonbohm.evolution import SpatialGrid, evolve_snapshots, prepare_gaussian
from kaonbohm.packet import GaussianPacket, amplitude_at, spread_at
from kaonbohm.reconstruction import bohmian_retrodict
from kaonbohm.simulator import SimulatorSetup, generate_events
from kaonbohm.trajectories import (
    FreeTrajectorySpec,
    TrajectoryState,
    free_position,
    integrate_trajectory,
    sample_ensemble,
    transport_offsets,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _validation_packet(sigma0: float = 1e-15, mass: float = PION_MASS, velocity: float = 0.0) -> GaussianPacket:
    return GaussianPacket(0.0, velocity, sigma0, mass, 0.0, HBAR)


def solver_vs_analytic(points_per_sigma: int = 40, dtau: float = 2e-3) -> CheckResult:
    pk = _validation_packet()
    taus = [0.5, 1.0, 2.0]
    grid = SpatialGrid.around(0.0, 30 * pk.sigma0, pk.sigma0 / points_per_sigma)
    snaps = evolve_snapshots(prepare_gaussian(grid, pk), None, dtau * pk.time_scale, [t * pk.time_scale for t in taus])
    worst_std = 0.0
    worst_mod = 0.0
    for snap in snaps:
        sig = spread_at(pk, snap.time)
        worst_std = max(worst_std, abs(snap.std_position() / sig - 1))
        inside = np.abs(grid.x - pk.center_at(snap.time)) <= 3 * sig
        exact = np.abs(amplitude_at(pk, grid.x[inside], snap.time))
        worst_mod = max(worst_mod, float(np.max(np.abs(np.abs(snap.amplitudes[inside]) - exact) / exact)))
    ok = worst_std < 1e-3 and worst_mod < 1e-3
    return CheckResult("solver_vs_analytic", ok, f"max std rel err {worst_std:.2e}, max |psi| rel err (3 sigma) {worst_mod:.2e}")


def trajectories_vs_closed_form(points_per_sigma: int = 40, dtau: float = 2e-3, tau_max: float = 3.0) -> CheckResult:
    pk = _validation_packet()
    s0 = pk.sigma0
    x0 = np.array([0.0, s0, -s0, 2 * s0, -2 * s0])
    grid = SpatialGrid.around(0.0, 30 * s0, s0 / points_per_sigma)
    n = int(round(tau_max / dtau))
    path = integrate_trajectory(prepare_gaussian(grid, pk), None, TrajectoryState(x0, 0.0), dtau * pk.time_scale, n)
    worst = 0.0
    for t, x in zip(path.t, path.x):
        exact = free_position(FreeTrajectorySpec(pk, x0), t)
        worst = max(worst, float(np.max(np.abs(x - exact))) / spread_at(pk, t))
    return CheckResult("trajectories_vs_closed_form", worst < 1e-3, f"max deviation {worst:.2e} sigma(t)")


def equivariance(n: int = 10_000, tau: float = 2.0, seed: int = 1) -> CheckResult:
    pk = _validation_packet(velocity=3.0e7)
    ens = sample_ensemble(pk, n, seed)
    t = tau * pk.time_scale
    x = transport_offsets(pk, ens.offsets, t)
    res = stats.kstest(x, "norm", args=(pk.center_at(t), spread_at(pk, t)))
    return CheckResult("equivariance", res.pvalue > 0.01, f"KS D={res.statistic:.4f}, p={res.pvalue:.3f}")


def roundtrip(n_events: int = 300, seed: int = 11) -> CheckResult:
    setup = SimulatorSetup()
    events, _ = generate_events(setup, n_events, seed)
    worst_v = 0.0
    worst_t = 0.0
    unsolved = 0
    solvable = 0
    for ev in events:
        if not ev.detected:
            continue
        solvable += 1
        res = bohmian_retrodict(
            ev.hits, pion_mass=setup.pion_mass, sigma0=setup.sigma0, n_samples=1, seed=seed, event_id=ev.id, offsets=ev.offsets[None]
        )
        if res.n_failed:
            unsolved += 1
            continue
        worst_v = max(worst_v, float(np.max(np.abs(res.vertex - ev.vertex))))
        worst_t = max(worst_t, abs(res.t1 - ev.t1) / ev.t1)
    ok = unsolved == 0 and worst_v < 1e-9 and worst_t < 1e-9
    return CheckResult(
        "roundtrip", ok, f"{solvable} events, {unsolved} unsolved, vertex err {worst_v:.2e} m, t1 rel err {worst_t:.2e}"
    )


def run_all() -> list[CheckResult]:
    return [solver_vs_analytic(), trajectories_vs_closed_form(), equivariance(), roundtrip()]
