import csv
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kaonbohm.constants import HBAR, PION_MASS
from kaonbohm.errors import NegativeElapsed, NodeRegion, NonPositiveElapsed, OutOfGrid
from kaonbohm.evolution import GridWaveFunction, SpatialGrid, evolve, polar_decompose, prepare_gaussian
from kaonbohm.packet import GaussianPacket, spread_at, spread_rate
from kaonbohm.trajectories import (
    FreeTrajectorySpec,
    Path,
    TrajectoryState,
    draw_offsets,
    emission_center,
    free_position,
    guidance_velocity,
    integrate_trajectory,
    invert_offset,
    sample_ensemble,
    transport_offsets,
    write_trajectories,
)

S0 = 1e-15


def packet(velocity=0.0, center=0.0, t0=0.0):
    return GaussianPacket(center, velocity, S0, PION_MASS, t0, HBAR)


def grid(pps=20, half=30.0):
    return SpatialGrid.around(0.0, half * S0, S0 / pps)


# guidance field


def test_guidance_zero_for_real_psi():
    pol = polar_decompose(prepare_gaussian(grid(), packet()))
    x = np.linspace(-3, 3, 13) * S0
    assert np.all(guidance_velocity(pol, x, PION_MASS) == 0.0)


def test_guidance_plane_wave():
    k = 0.9 / S0
    pol = polar_decompose(prepare_gaussian(grid(), packet(HBAR * k / PION_MASS)))
    x = np.linspace(-4, 4, 17) * S0 + 0.3 * pol.grid.dx
    np.testing.assert_allclose(guidance_velocity(pol, x, PION_MASS), HBAR * k / PION_MASS, rtol=1e-6)


def test_guidance_matches_closed_form_field_at_unit_tau():
    v0 = 4e6
    pk = packet(v0)
    psi = evolve(prepare_gaussian(grid(pps=40, half=35), pk), None, 2e-3 * pk.time_scale, 500)
    t = psi.time
    xc = pk.center_at(t)
    x = xc + spread_at(pk, t)
    v = guidance_velocity(polar_decompose(psi), x, PION_MASS)
    # d/dt2 of x = c + v0 dt + X0 s(dt), with X0 eliminated through x
    tau = pk.tau(t)
    ds_over_s = tau / ((1 + tau**2) * pk.time_scale)
    expected = v0 + (x - xc) * ds_over_s
    assert abs(v / expected - 1) < 1e-3
    # same field written through the width growth rate
    assert expected == pytest.approx(v0 + (x - xc) * spread_rate(pk, t) / spread_at(pk, t), rel=1e-12)


def test_guidance_errors():
    g = grid()
    pol = polar_decompose(prepare_gaussian(g, packet()))
    with pytest.raises(OutOfGrid):
        guidance_velocity(pol, g.x_max + g.dx, PION_MASS)
    amps = np.exp(-(g.x**2) / (4 * S0**2)) * (g.x / S0)
    nodal = polar_decompose(GridWaveFunction(g, amps, 0.0, PION_MASS), node_threshold=1e-3)
    with pytest.raises(NodeRegion):
        guidance_velocity(nodal, 0.0, PION_MASS)


# integrated trajectories


@pytest.fixture(scope="module")
def integrated_paths():
    v0 = 0.5 * HBAR / (PION_MASS * S0)
    pk = packet(v0, center=-5 * S0)
    x0 = pk.center + np.array([0.0, S0, -S0, 2 * S0, -2 * S0])
    dtau = 2e-3
    path = integrate_trajectory(
        prepare_gaussian(grid(pps=40, half=40), pk), None, TrajectoryState(x0, 0.0), dtau * pk.time_scale, int(3.0 / dtau)
    )
    return pk, x0, path


def test_center_trajectory_is_classical(integrated_paths):
    pk, _, path = integrated_paths
    dev = np.abs(path.x[:, 0] - pk.center_at(path.t)) / spread_at(pk, path.t)
    assert dev.max() < 1e-3


def test_offset_trajectory_matches_closed_form(integrated_paths):
    pk, x0, path = integrated_paths
    for j in range(1, len(x0)):
        exact = free_position(FreeTrajectorySpec(pk, x0[j] - pk.center), path.t)
        assert np.max(np.abs(path.x[:, j] - exact) / spread_at(pk, path.t)) < 1e-3


def test_integrator_preserves_order(integrated_paths):
    pk, x0, path = integrated_paths
    order = np.argsort(x0)
    xs = path.x[:, order]
    gaps = np.diff(xs, axis=1) / spread_at(pk, path.t)[:, None]
    assert gaps.min() > -1e-6


def test_integrator_second_order_in_dt():
    pk = packet(0.5 * HBAR / (PION_MASS * S0))
    psi = prepare_gaussian(grid(), pk)
    x0 = np.array([-1.5, 0.3, 1.0]) * S0
    T = pk.time_scale

    def end(dtau):
        return integrate_trajectory(psi, None, TrajectoryState(x0, 0.0), dtau * T, int(round(1.0 / dtau))).x[-1]

    ref = end(0.0025)
    errs = [np.max(np.abs(end(d) - ref)) for d in (0.04, 0.02, 0.01)]
    order = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(errs), 1)[0]
    assert 1.8 < order < 2.3


def test_integrate_scalar_start():
    pk = packet()
    path = integrate_trajectory(prepare_gaussian(grid(), pk), None, TrajectoryState(0.0, 0.0), 1e-2 * pk.time_scale, 10)
    assert path.x.shape == (11,)
    assert np.max(np.abs(path.x)) < 1e-12 * S0


# closed form


def test_free_position_examples():
    pk = GaussianPacket(0.0, 5.0, S0, PION_MASS)
    assert free_position(FreeTrajectorySpec(pk, 0.0), 2.0) == 10.0
    pk2 = packet(3e5, center=7e-15)
    assert free_position(FreeTrajectorySpec(pk2, 0.4 * S0), 0.0) == pytest.approx(7.4e-15, rel=1e-15)
    t = pk2.time_scale
    got = free_position(FreeTrajectorySpec(pk2, S0), t) - pk2.center
    assert got == pytest.approx(3e5 * t + math.sqrt(2) * S0, rel=1e-14)


def test_free_position_classical_line_exact():
    pk = packet(2.2e8, center=1.25)
    spec = FreeTrajectorySpec(pk, 0.0)
    for t in (1e-12, 3.3e-9, 7e-9):
        assert free_position(spec, t) == pk.center + pk.velocity * t


def test_free_position_before_emission():
    with pytest.raises(NegativeElapsed):
        free_position(FreeTrajectorySpec(packet(t0=1.0), 0.0), 0.5)


def test_offset_guard():
    with pytest.raises(ValueError):
        FreeTrajectorySpec(packet(), 10.5 * S0)
    FreeTrajectorySpec(packet(), 10 * S0)


@settings(max_examples=300, deadline=None)
@given(
    x0=st.floats(-10, 10),
    tau=st.floats(0, 1e9),
    v=st.floats(-3e8, 3e8),
)
def test_invert_roundtrip(x0, tau, v):
    pk = packet(v, center=0.37)
    t2 = tau * pk.time_scale
    hit = free_position(FreeTrajectorySpec(pk, x0 * S0), t2)
    if t2 == 0:
        return
    back = invert_offset(hit, t2, pk, 0.0)
    # a hit dominated by the classical term carries its round-off, divided by s
    s = pk.spreading_factor(t2)
    roundoff = 4 * np.finfo(float).eps * (abs(pk.center) + abs(v * t2) + abs(hit)) / s
    assert abs(back - x0 * S0) <= max(1e-12 * abs(x0 * S0), roundoff)


def test_invert_roundtrip_relative_when_offset_dominates():
    pk = packet(0.0, center=0.0)
    rng = np.random.default_rng(3)
    for x0 in rng.uniform(-10, 10, 200) * S0:
        t2 = rng.uniform(0, 100) * pk.time_scale
        back = invert_offset(free_position(FreeTrajectorySpec(pk, x0), t2), t2, pk, 0.0)
        assert abs(back / x0 - 1) < 1e-12


def test_invert_on_classical_line():
    # times chosen so that t2 - t1 and the classical displacement are exact
    pk = packet(2e8, center=3.0)
    assert invert_offset(3.0 + 2e8 * 2.0, 2.5, pk, 0.5) == 0.0


def test_invert_non_positive_elapsed():
    with pytest.raises(NonPositiveElapsed):
        invert_offset(1.0, 2.0, packet(), 2.0)
    with pytest.raises(NonPositiveElapsed):
        invert_offset(1.0, 2.0, packet(), np.array([0.0, 3.0]))


def test_invert_scan_against_arbitrary_precision():
    m, s0, v, c = PION_MASS, 1e-15, 2.7e8, 0.5
    pk = GaussianPacket(c, v, s0, m, 0.0, HBAR)
    hit, t2 = 1.7, 5.0e-9
    t1 = np.linspace(0.0, 4.9e-9, 100)
    got = np.abs(invert_offset(hit, t2, pk, t1))
    with mp.workdps(40):
        h, mm, ss, vv, cc, H, T2 = (mp.mpf(float(a)) for a in (HBAR, m, s0, v, c, hit, t2))
        for g, a in zip(got, t1):
            d = T2 - mp.mpf(float(a))
            expect = abs((H - cc - vv * d) / mp.sqrt(1 + (h * d / (2 * mm * ss**2)) ** 2))
            assert abs(mp.mpf(float(g)) / expect - 1) < mp.mpf("1e-12")


def test_emission_center_inverts_forward_map():
    rng = np.random.default_rng(0)
    v = np.array([1.3e8, -2.1e8])
    vertex = np.array([2.0, 0.1])
    t1 = 4e-9
    for _ in range(20):
        o = rng.normal(0, S0, 2)
        pk = GaussianPacket(vertex, v, S0, PION_MASS, t1, HBAR)
        t2 = t1 + rng.uniform(1e-9, 9e-9)
        hit = free_position(FreeTrajectorySpec(pk, o), t2)
        back = emission_center(hit, t2, v, o, t1, S0, PION_MASS, HBAR)
        np.testing.assert_allclose(back, vertex, atol=1e-14)


# ensembles


def test_ensemble_deterministic():
    pk = packet()
    a = sample_ensemble(pk, 1000, 42)
    b = sample_ensemble(pk, 1000, 42)
    c = sample_ensemble(pk, 1000, 43)
    np.testing.assert_array_equal(a.offsets, b.offsets)
    assert not np.array_equal(a.offsets, c.offsets)
    assert a.seed == 42 and len(a) == 1000


def test_ensemble_std_and_ks():
    n = 100_000
    ens = sample_ensemble(packet(), n, 9)
    # 1% bound is > 4 standard errors of the sample std (1/sqrt(2n) = 0.22%)
    assert abs(ens.offsets.std() / S0 - 1) < 0.01
    d = stats.kstest(ens.offsets / S0, "norm").statistic
    assert d < stats.kstwo.ppf(0.99, n)
    assert np.all(np.abs(ens.offsets) <= 10 * S0)


def test_ensemble_planar_shape():
    pk = GaussianPacket(np.zeros(2), np.array([1.0, 0.0]), S0, PION_MASS)
    ens = sample_ensemble(pk, 50, 1)
    assert ens.offsets.shape == (50, 2)
    assert len(ens.specs()) == 50


def test_ensemble_needs_members():
    with pytest.raises(ValueError):
        sample_ensemble(packet(), 0, 1)


def test_draw_offsets_redraws_and_counts():
    class Fixed:
        def __init__(self):
            self.calls = 0

        def standard_normal(self, shape):
            self.calls += 1
            if self.calls == 1:
                return np.array([0.5, 11.0, -12.0, 1.0])
            return np.full(shape, 0.25)

    vals, redrawn = draw_offsets(Fixed(), 2.0, 4)
    assert redrawn == 2
    np.testing.assert_array_equal(vals, [1.0, 0.5, 0.5, 2.0])


def test_equivariance_ks():
    pk = packet(3e7, center=1e-14)
    ens = sample_ensemble(pk, 10_000, 5)
    t = 2.0 * pk.time_scale
    x = transport_offsets(pk, ens.offsets, t)
    p = stats.kstest(x, "norm", args=(pk.center_at(t), spread_at(pk, t))).pvalue
    assert p > 0.01


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(-10, 10),
    gap=st.floats(1e-6, 5),
    tau=st.floats(0, 1e6),
)
def test_non_crossing_closed_form(a, gap, tau):
    b = min(a + gap, 10.0)
    if not b > a:
        return
    pk = packet(1e6)
    t = tau * pk.time_scale
    xa = free_position(FreeTrajectorySpec(pk, a * S0), t)
    xb = free_position(FreeTrajectorySpec(pk, b * S0), t)
    assert xa < xb or (xb - xa) > -4e-16 * abs(xa)


def test_write_trajectories(tmp_path):
    t = np.array([0.0, 1.0, 2.0])
    one = Path(t, np.array([[0.0, 1.0], [0.5, 1.5], [1.0, 2.0]]))
    path = tmp_path / "traj.csv"
    write_trajectories(path, [one])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["trajectory_id", "t_s", "x_m"]
    assert len(rows) == 7
    assert rows[4] == ["1", "0.0", "1.0"]
    planar = Path(t, np.zeros((3, 1, 2)))
    write_trajectories(path, [planar])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["trajectory_id", "t_s", "x_m", "y_m"]
    assert len(rows[1]) == 4
