"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``acceptance`` fixture
(echoed in the pytest terminal summary) and then asserts the same outcome.
"""

import math
from fractions import Fraction

import mpmath as mp
import numpy as np
from scipy import stats

from kaonbohm.analysis import reconstruct_events, run_pipeline
from kaonbohm.config import default_config
from kaonbohm.constants import HBAR, PION_MASS
from kaonbohm.evolution import SpatialGrid, evolve_snapshots, prepare_gaussian
from kaonbohm.kaon import CHARGED_2PI, KaonMixing, MeasurementModel, default_species, overlap_LS, sample_mode, unitarity_residual
from kaonbohm.packet import GaussianPacket, spread_at, spreading_factor
from kaonbohm.reconstruction import bohmian_retrodict
from kaonbohm.report import flight_spread_table
from kaonbohm.simulator import SimulatorSetup, generate_events
from kaonbohm.trajectories import (
    FreeTrajectorySpec,
    TrajectoryState,
    free_position,
    integrate_trajectory,
    invert_offset,
    sample_ensemble,
    transport_offsets,
)

S0 = 1e-15


def _pion_packet(velocity=0.0):
    return GaussianPacket(0.0, velocity, S0, PION_MASS, 0.0, HBAR)


def test_criterion_1_spreading_law(acceptance):
    m, s0, t = 8.87e-28, 1e-15, 3.3e-8
    with mp.workdps(50):
        oracle = mp.mpf(s0) * mp.sqrt(1 + (mp.mpf(HBAR) * mp.mpf(t) / (2 * mp.mpf(m) * mp.mpf(s0) ** 2)) ** 2)
        err_oracle = float(abs(mp.mpf(spread_at(GaussianPacket(0.0, 0.0, s0, m), t)) / oracle - 1))

    pk = _pion_packet()
    taus = [0.5, 1.0, 2.0]
    grid = SpatialGrid.around(0.0, 30 * S0, S0 / 20)
    snaps = evolve_snapshots(prepare_gaussian(grid, pk), None, 2e-3 * pk.time_scale, [x * pk.time_scale for x in taus])
    err_grid = max(abs(sn.std_position() / spread_at(pk, sn.time) - 1) for sn in snaps)

    big = np.array([1.001e3, 1e4, 1e6, 1e9, 1e12]) * pk.time_scale
    err_asym = float(np.max(np.abs(spread_at(pk, big) * 2 * PION_MASS * S0 / (HBAR * big) - 1)))

    table = flight_spread_table([1e-15, 1e-14, 1e-13, 1e-12], [1e6, 1e7, 1e8, 2e8], 10.0, m, HBAR)
    consistent = all(r["sigma_m"] == spread_at(GaussianPacket(0.0, r["speed_m_per_s"], r["sigma0_m"], m), r["flight_time_s"]) for r in table)
    widest = max(r["sigma_m"] for r in table)

    ok = err_oracle < 1e-12 and err_grid < 1e-3 and err_asym < 1e-6 and consistent
    detail = (
        f"sigma(3.3e-8 s) = {float(oracle):.12g} m (rel err {err_oracle:.1e}); grid std rel err {err_grid:.1e}; "
        f"asymptote err {err_asym:.1e}; widest 10 m flight width in sweep {widest:.3g} m"
    )
    acceptance(1, ok, detail)
    assert ok


def test_criterion_2_trajectory_law(acceptance):
    pk = _pion_packet(0.5 * HBAR / (PION_MASS * S0))
    x0 = np.array([0.0, S0, -S0, 2 * S0, -2 * S0])
    grid = SpatialGrid.around(0.0, 30 * S0, S0 / 40)
    path = integrate_trajectory(prepare_gaussian(grid, pk), None, TrajectoryState(x0, 0.0), 2e-3 * pk.time_scale, 1500)
    dev = max(
        float(np.max(np.abs(x - free_position(FreeTrajectorySpec(pk, x0), t)))) / spread_at(pk, t) for t, x in zip(path.t, path.x)
    )

    times = np.linspace(0.0, 3.0, 101)[1:] * pk.time_scale
    worst = 0.0
    for o in x0[1:]:
        hits = free_position(FreeTrajectorySpec(pk, o), times)
        back = invert_offset(hits, times, pk, 0.0)
        worst = max(worst, float(np.max(np.abs(back / o - 1))))
    zero_back = float(np.max(np.abs(invert_offset(free_position(FreeTrajectorySpec(pk, 0.0), times), times, pk, 0.0))))

    ok = dev < 1e-3 and worst < 1e-12 and zero_back < 1e-12 * S0
    acceptance(2, ok, f"integrator max deviation {dev:.2e} sigma(t); roundtrip rel err {worst:.1e}; X0=0 residual {zero_back / S0:.1e} sigma0")
    assert ok


def test_criterion_3_equivariance(acceptance):
    pk = _pion_packet(3.0e7)
    ens = sample_ensemble(pk, 10_000, 2)
    t = 2.0 * pk.time_scale
    target = (pk.center_at(t), spread_at(pk, t))
    closed = stats.kstest(transport_offsets(pk, ens.offsets, t), "norm", args=target)

    grid = SpatialGrid.around(0.0, 35 * S0, S0 / 20)
    path = integrate_trajectory(prepare_gaussian(grid, pk), None, TrajectoryState(ens.offsets, 0.0), 4e-3 * pk.time_scale, 500)
    integ = stats.kstest(path.x[-1], "norm", args=(pk.center_at(path.t[-1]), spread_at(pk, path.t[-1])))

    ok = closed.pvalue > 0.01 and integ.pvalue > 0.01
    acceptance(3, ok, f"closed form KS p={closed.pvalue:.3f}; integrated KS p={integ.pvalue:.3f} (n=10^4, tau=2)")
    assert ok


def test_criterion_4_non_crossing(acceptance):
    pk = _pion_packet(0.5 * HBAR / (PION_MASS * S0))
    rng = np.random.default_rng(4)
    pairs = np.sort(rng.normal(0.0, S0, (1000, 2)), axis=1)
    pairs = pairs[pairs[:, 0] < pairs[:, 1]]
    taus = rng.uniform(0.0, 10.0, 100)
    preserved = 0
    for tau in taus:
        t = tau * pk.time_scale
        x = free_position(FreeTrajectorySpec(pk, pairs), t)
        preserved += int(np.sum(x[:, 0] < x[:, 1]))
    closed_frac = preserved / (len(pairs) * len(taus))

    grid = SpatialGrid.around(0.0, 30 * S0, S0 / 20)
    path = integrate_trajectory(prepare_gaussian(grid, pk), None, TrajectoryState(pairs, 0.0), 2e-3 * pk.time_scale, 1500)
    idx = np.linspace(1, 1500, 100).astype(int)
    margins = [float(np.min(path.x[i][:, 1] - path.x[i][:, 0])) / spread_at(pk, path.t[i]) for i in idx]
    worst = min(margins)

    ok = closed_frac == 1.0 and worst > -1e-6
    acceptance(4, ok, f"{len(pairs)} pairs x 100 times: closed form ordered {100 * closed_frac:.1f}%; integrator min gap {worst:.2e} sigma(t)")
    assert ok


def test_criterion_5_kaon_model(acceptance):
    exact = Fraction(121 - 81, 121 + 81)
    err = abs(overlap_LS(KaonMixing(1.1, 0.9)) - float(exact))

    kl = default_species()["KL"]
    n = 1_000_000
    modes = sample_mode(kl, np.random.default_rng(5), n)
    z = {}
    for mode, p in (("pi_e_nu", 0.39), ("pi_mu_nu", 0.27), ("3pi", 0.33), (CHARGED_2PI, 1e-3)):
        z[mode] = (int(np.sum(modes == mode)) - n * p) / math.sqrt(n * p * (1 - p))

    a = b = 1 / math.sqrt(2)
    zero_orth = unitarity_residual(MeasurementModel(0.0, 0.0, a, b)) == 0
    nonzero_example = unitarity_residual(MeasurementModel(float(exact), 0.0, a, b)) != 0

    ok = err < 1e-12 and all(abs(v) <= 3 for v in z.values()) and zero_orth and nonzero_example
    zs = ", ".join(f"{k} {v:+.2f}" for k, v in z.items())
    acceptance(5, ok, f"overlap err {err:.1e}; branching z-scores {zs}; residual 0 for orthogonal states, nonzero for the mixed example")
    assert ok


def test_criterion_6_roundtrip(acceptance):
    setup = SimulatorSetup()
    events, _ = generate_events(setup, 1000, 2025)
    solvable = [e for e in events if e.detected]
    bad = 0
    worst_v = worst_t = 0.0
    for ev in solvable:
        res = bohmian_retrodict(ev.hits, pion_mass=setup.pion_mass, sigma0=setup.sigma0, n_samples=1, seed=0, event_id=ev.id, offsets=ev.offsets[None])
        if res.n_failed:
            bad += 1
            continue
        dv = float(np.max(np.abs(res.vertex - ev.vertex)))
        dt = abs(res.t1 - ev.t1) / ev.t1
        worst_v, worst_t = max(worst_v, dv), max(worst_t, dt)
        bad += dv >= 1e-9 or dt >= 1e-9
    ok = bad == 0 and len(solvable) > 0
    acceptance(6, ok, f"1000 events, {len(solvable)} solvable, {bad} outside tolerance; worst vertex err {worst_v:.1e} m, t1 rel err {worst_t:.1e}")
    assert ok


SWEEP = [1e-15, 1e-14, 1e-13, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1, 1.0]


def test_criterion_7_spread_vs_sigma0(acceptance):
    base = default_config().replace({"run.n_events": 400, "run.seed": 3, "reconstruction.modes": "bohmian"})
    theta_tau = base["reconstruction"]["theta"] * base.tau_s
    v_k = base["beam"]["speed_m_per_s"]
    spreads, rates, ratios = [], [], []
    for s0 in SWEEP:
        cfg = base.replace({"packet.sigma0_m": s0})
        events, _ = generate_events(cfg.setup(), cfg.n_events, cfg.seed)
        det = [e for e in events if e.detected]
        rows = reconstruct_events(det, cfg, ["bohmian"])
        spreads.append(float(np.nanmedian([r.t1_std_s for r in rows])))
        rates.append(sum(r.verdict == "ambiguous" for r in rows) / len(rows))
        sig = [s0 * np.mean(spreading_factor(np.array([h.t2 for h in e.hits]) - e.t1, s0, cfg.pion_mass, cfg.hbar)) for e in det]
        ratios.append(float(np.median(sig)) / v_k)
    for s0, sp, r, q in zip(SWEEP, spreads, rates, ratios):
        print(f"sigma0 {s0:8.0e} m  median t1 std {sp:.3e} s  ambiguous {r:.3f}  sigma(dt)/v_K {q:.2e} s")
    grows = all(b > a for a, b in zip(spreads, spreads[1:]))
    nondecreasing = all(b >= a for a, b in zip(rates, rates[1:]))
    wide = [(s0, r) for s0, r, q in zip(SWEEP, rates, ratios) if q > theta_tau]
    majority = bool(wide) and all(r > 0.5 for _, r in wide)
    ok = grows and nondecreasing and majority
    detail = (
        f"spread monotone: {grows}; ambiguity nondecreasing: {nondecreasing}; "
        f">50% ambiguous wherever sigma(dt)/v_K > theta*tau_S: {majority} "
        f"({', '.join(f'{s0:g} m: {r:.2f}' for s0, r in wide)})"
    )
    acceptance(7, ok, detail)
    assert ok


def test_criterion_8_determinism(acceptance, tmp_path):
    cfg = default_config().replace({"run.n_events": 300, "run.seed": 8})
    run_pipeline(cfg, tmp_path / "a")
    run_pipeline(cfg, tmp_path / "b")
    names = ["events.jsonl", "results.csv", "comparison.csv", "comparison_summary.csv", "report.txt"]
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = all(same)
    acceptance(8, ok, f"{sum(same)}/{len(names)} output files byte-identical across two runs")
    assert ok
