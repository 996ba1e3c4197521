"""The ten acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one PASS/FAIL line; the lines are repeated in the terminal
summary. Long runs (criteria 6 to 9) take several minutes on one core.
"""
import math
import time

import numpy as np
import pytest

import oracles
from acceptance_log import LINES
from kacvortex.app import io
from kacvortex.dynamics import Integrator, RunConfig, Schedule, load_checkpoint, run_annealed, run_to_equilibrium, save_checkpoint
from kacvortex.energy import free_energy, kirchhoff_onsager
from kacvortex.fields import BoundarySpec, InitSpec, heisenberg_boundary, init_interior, uniform_vortex_boundary, zero_collar
from kacvortex.lattice import Field, build_geometry, build_kernel, convolve
from kacvortex.meanfield import MeanFieldModel, f, i_prime, solve_m_beta
from kacvortex.topology import check_conservation, detect_vortices, sphere_degree

BETA = 5.0
RELAX = RunConfig(h=0.5, t_max=40000, tol=1e-6, record_every=10**9)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def planar_start(size, degree, init="zero", seed=0, radius=2):
    g = build_geometry(size, size, 2, radius)
    return init_interior(g, InitSpec(init, 0.05, seed), base=uniform_vortex_boundary(g, BoundarySpec(degree=degree)))


def relax(m0, beta=BETA, config=RELAX):
    return run_to_equilibrium(m0, MeanFieldModel(m0.geometry.q, beta), build_kernel(m0.geometry.kernel_radius), config)


def free_energy_of(m):
    return free_energy(m, MeanFieldModel(2, BETA), build_kernel(2)).total


def test_criterion_1_kernel_exactness():
    t0 = time.perf_counter()
    sums_ok = True
    for r in range(1, 33):
        k = build_kernel(r)
        sums_ok &= k.raw_sum == 2 * r * r and abs(k.weights.sum() - 1.0) <= 1e-12
    g = build_geometry(8, 8, 2, 3)
    rng = np.random.default_rng(11)
    m = Field(g, rng.uniform(-0.7, 0.7, g.padded_shape + (2,)))
    conv_ok = all(
        np.array_equal(convolve(m, build_kernel(r)), oracles.brute_convolve(m.values, 8, 8, 3, oracles.rhombus_weight_table(r)))
        for r in (1, 2, 3)
    )
    dt = time.perf_counter() - t0
    report(1, sums_ok and conv_ok and dt < 1.0, f"strata sums exact R=1..32, 8x8 convolve matches brute force ({dt:.2f}s)")


def test_criterion_2_meanfield():
    t0 = time.perf_counter()
    ts = np.array([0.1, 0.5, 1, 2, 5, 10, 50])
    err = max(float(np.max(np.abs(i_prime(f(ts, q), q) - ts))) for q in (2, 3))
    m53 = solve_m_beta(MeanFieldModel(3, 5.0))
    subcritical = [solve_m_beta(MeanFieldModel(q, b)) for q in (2, 3) for b in (0.5, 1.0, float(q))]
    dt = time.perf_counter() - t0
    ok = err <= 1e-8 and abs(m53 - 0.725) <= 1e-3 and all(v == 0 for v in subcritical) and dt < 1.0
    report(2, ok, f"roundtrip err {err:.1e}, m_beta(5,3)={m53:.6f}, m_beta=0 for beta<=q ({dt:.2f}s)")


def test_criterion_3_lyapunov():
    t0 = time.perf_counter()
    worst_rise, worst_rel = -math.inf, 0.0
    for degree in (0, 1):
        for init in ("zero", "random"):
            m0 = planar_start(32, degree, init, seed=7)
            _, trace = relax(m0, config=RunConfig(h=1e-3, t_max=4.0, tol=1e-12, record_every=10))
            t, F, diss = trace.column("t"), trace.column("F_total"), trace.column("dissipation")
            worst_rise = max(worst_rise, float(np.max(np.diff(F))))
            # ten checkpoints spread over [0.4, 4]; central differences of the recorded F
            for tc in np.linspace(0.4, 3.9, 10):
                i = int(np.argmin(np.abs(t - tc)))
                rate = -(F[i + 1] - F[i - 1]) / (t[i + 1] - t[i - 1])
                worst_rel = max(worst_rel, abs(rate - diss[i]) / diss[i])
    dt = time.perf_counter() - t0
    ok = worst_rise <= 1e-6 and worst_rel <= 0.02 and dt < 120
    report(3, ok, f"max F increase {worst_rise:.2e}, max |-dF/dt - I|/I {worst_rel:.2e} ({dt:.1f}s)")


def _bound_margin(m0, beta, check, h=0.05, t_max=50.0):
    integ = Integrator(m0, build_kernel(2), RunConfig(h=h, t_max=t_max), Schedule.constant(beta))
    worst = check(integ.field)
    while integ.t < t_max - 1e-9:
        integ.advance()
        worst = min(worst, check(integ.field))
    return worst


def test_criterion_4_trajectory_bounds():
    t0 = time.perf_counter()
    h, mu = 0.05, 0.3
    g2, g3 = build_geometry(32, 32, 2, 2), build_geometry(32, 32, 3, 2)
    margins = {"|m|<=lambda": [], "Re<nu,m> >= mu": [], "m_z >= mu": []}
    for seed in (1, 2, 3):
        rng = np.random.default_rng(seed)
        # |m0| <= lambda with m_beta <= lambda < 1, collar included
        lam = 0.9
        collar = Field(g2, uniform_vortex_boundary(g2, BoundarySpec(degree=1)).values * lam)
        m0 = init_interior(g2, InitSpec("random", lam, seed), base=collar)
        margins["|m|<=lambda"].append(_bound_margin(m0, BETA, lambda m: lam - m.sup_modulus()))
        # Re<nu, m0> >= mu with |m0| <= lambda = m_beta; the first step is a pure decay by e^-h,
        # so the initial component starts at mu e^h
        mb = solve_m_beta(MeanFieldModel(2, BETA))
        assert math.hypot(mu, mb) < BETA * f(BETA * mb, 2)
        collar = Field(g2, uniform_vortex_boundary(g2, BoundarySpec(degree=0, phi0=0.0)).values * mb)
        x = rng.uniform(mu * math.exp(h), mb, (32, 32))
        y = rng.uniform(-1, 1, (32, 32)) * np.sqrt(mb * mb - x * x)
        m0 = collar.with_interior(np.stack([x, y], axis=-1))
        margins["Re<nu,m> >= mu"].append(_bound_margin(m0, BETA, lambda m: m.interior[..., 0].min() - mu))
        # q = 3, z-component
        mb3 = solve_m_beta(MeanFieldModel(3, BETA))
        collar = Field(g3, heisenberg_boundary(g3, BoundarySpec(degree=1, heisenberg_theta0=math.pi / 4)).values * mb3)
        z = rng.uniform(mu * math.exp(h), mb3, (32, 32))
        a = rng.uniform(0, 2 * math.pi, (32, 32))
        r = rng.uniform(0, 1, (32, 32)) * np.sqrt(mb3 * mb3 - z * z)
        m0 = collar.with_interior(np.stack([r * np.cos(a), r * np.sin(a), z], axis=-1))
        margins["m_z >= mu"].append(_bound_margin(m0, BETA, lambda m: m.interior[..., 2].min() - mu))
    worst = {k: min(v) for k, v in margins.items()}
    dt = time.perf_counter() - t0
    ok = all(v >= -1e-9 for v in worst.values()) and dt < 120
    detail = ", ".join(f"{k} margin {v:.2e}" for k, v in worst.items())
    report(4, ok, f"{detail} ({dt:.1f}s)")


def test_criterion_5_high_temperature_decay():
    t0 = time.perf_counter()
    # R = 8 on L* = 32; at R = 2 the slower spectral gap leaves sup|m| ~ 1.4e-3 at t = 50
    g = build_geometry(32, 32, 2, 8)
    sups = []
    for seed in (1, 2):
        m0 = init_interior(g, InitSpec("random", 0.9, seed), base=zero_collar(g))
        integ = Integrator(m0, build_kernel(8), RunConfig(h=0.05, t_max=50.0), Schedule.constant(2.0))
        while integ.t < 50.0 - 1e-9:
            integ.advance()
        sups.append(integ.field.sup_modulus())
    dt = time.perf_counter() - t0
    report(5, max(sups) <= 1e-3 and dt < 60, f"beta=2 zero collar, sup|m|(t=50) = {max(sups):.2e} ({dt:.1f}s)")


def test_criterion_6_vortex_phenomenology():
    t0 = time.perf_counter()
    center = (31.5, 31.5)
    one, _ = relax(planar_start(64, 1))
    r1 = detect_vortices(one)
    ok_a = r1.charges == [1] and math.dist(r1.vortices[0].center, center) <= 4
    three, _ = relax(planar_start(64, 3))
    r3 = detect_vortices(three)
    minus = [v for v in r3.vortices if v.charge == -1]
    plus = [v for v in r3.vortices if v.charge == 1]
    quadrants = {(v.center[0] > center[0], v.center[1] > center[1]) for v in plus}
    ok_b = (
        len(r3.vortices) == 5
        and len(minus) == 1
        and math.dist(minus[0].center, center) <= 4
        and len(plus) == 4
        and len(quadrants) == 4
    )
    rand, _ = relax(planar_start(64, 3, "random", seed=1))
    rr = detect_vortices(rand)
    ok_c = rr.charges == [1, 1, 1]
    conserved = all(check_conservation(r) for r in (r1, r3, rr))
    dt = time.perf_counter() - t0
    report(
        6,
        ok_a and ok_b and ok_c and conserved and dt < 600,
        f"d=1 {[(v.center, v.charge) for v in r1.vortices]}; d=3 zero {sorted(r3.charges)}; "
        f"d=3 random {rr.charges}; conserved={conserved} ({dt:.0f}s)",
    )


def test_criterion_7_kirchhoff_onsager():
    t0 = time.perf_counter()
    w0_ok = (
        kirchhoff_onsager([((3.5, 4.5), 1)]) == 0.0
        and kirchhoff_onsager([((0.0, 0.0), 1), ((3.0, 4.0), 1)]) == -2 * math.pi * math.log(5.0)
        and kirchhoff_onsager([((0.0, 0.0), 1), ((3.0, 4.0), -1)]) == 2 * math.pi * math.log(5.0)
    )
    ks, conserved = {}, True
    for d in range(1, 6):
        for seed in (1, 2, 3):
            m, trace = relax(planar_start(64, d, "random", seed=seed))
            rep = detect_vortices(m)
            conserved &= check_conservation(rep) and trace.converged
            ks.setdefault(d, []).append(trace.rows[-1][2] - kirchhoff_onsager(rep.vortices))
    ds = np.arange(1, 6)
    means = np.array([np.mean(ks[d]) for d in ds])
    increasing = bool(np.all(np.diff(means) > 0))

    def rel_residual(x, y):
        coef = np.polyfit(x, y, 1)
        return float(np.linalg.norm(y - np.polyval(coef, x)) / (y.max() - y.min()))

    fit_means = rel_residual(ds.astype(float), means)
    all_d = np.repeat(ds, 3).astype(float)
    all_k = np.concatenate([ks[d] for d in ds])
    fit_all = rel_residual(all_d, all_k)
    dt = time.perf_counter() - t0
    report(
        7,
        w0_ok and conserved and increasing and fit_means <= 0.25 and dt < 1800,
        f"mean K per d {np.round(means, 2).tolist()}, linear-fit residual/range {fit_means:.3f} "
        f"(seed means; {fit_all:.3f} over all 15 points) ({dt:.0f}s)",
    )


def test_criterion_8_annealing_benefit():
    t0 = time.perf_counter()
    reference, _ = relax(planar_start(64, 3))
    f_zero = free_energy_of(reference)
    four, _ = relax(planar_start(64, 4))
    g = four.geometry
    start = uniform_vortex_boundary(g, BoundarySpec(degree=3)).with_interior(four.interior)
    annealed, trace = run_annealed(start, 2, build_kernel(2), RELAX, Schedule.default(BETA))
    f_annealed = trace.rows[-1][2]
    rep = detect_vortices(annealed)
    dt = time.perf_counter() - t0
    ok = trace.converged and f_annealed < f_zero and check_conservation(rep) and dt < 600
    report(8, ok, f"annealed d=4 -> 3 F={f_annealed:.5f} vs zero-init d=3 F={f_zero:.5f} ({dt:.0f}s)")


def test_criterion_9_sphere_degree():
    t0 = time.perf_counter()
    g = build_geometry(64, 64, 3, 2)
    d_inst = sphere_degree(Field(g, oracles.instanton(64, 64, 2, scale=8.0))).degree
    const = Field(g, np.broadcast_to([0.0, 0.6, 0.8], g.padded_shape + (3,)).copy())
    d_const = sphere_degree(const).degree
    # upper-hemisphere regime: collar and initial interior have m_z >= mu
    mu, h = 0.3, 0.5
    g32 = build_geometry(32, 32, 3, 2)
    mb3 = solve_m_beta(MeanFieldModel(3, BETA))
    collar = Field(g32, heisenberg_boundary(g32, BoundarySpec(degree=1, heisenberg_theta0=math.pi / 4)).values * mb3)
    rng = np.random.default_rng(4)
    z = rng.uniform(mu * math.exp(h), mb3, (32, 32))
    a = rng.uniform(0, 2 * math.pi, (32, 32))
    r = rng.uniform(0, 1, (32, 32)) * np.sqrt(mb3 * mb3 - z * z)
    m0 = collar.with_interior(np.stack([r * np.cos(a), r * np.sin(a), z], axis=-1))
    upper, _ = relax(m0, config=RunConfig(h=h, t_max=40000, tol=1e-6, record_every=10**9))
    d_upper = sphere_degree(upper).degree
    # beta = 10 spin wave
    g64 = build_geometry(64, 64, 3, 2)
    base = heisenberg_boundary(g64, BoundarySpec(degree=1))
    wave, trace = relax(init_interior(g64, InitSpec("random", 0.05, 1), base=base), beta=10.0)
    rep = sphere_degree(wave)
    dt = time.perf_counter() - t0
    ok = (
        d_inst == 1
        and d_const == 0
        and d_upper == 0
        and rep.degree in (0, 1)
        and rep.residual < 0.05
        and trace.converged
        and dt < 600
    )
    report(
        9,
        ok,
        f"instanton D={d_inst}, constant D={d_const}, m_z>=mu run D={d_upper}, "
        f"beta=10 spin wave D={rep.degree} (residual {rep.residual:.1e}) ({dt:.0f}s)",
    )


def test_criterion_10_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    cfg = RunConfig(h=0.5, t_max=60.0, tol=1e-9, record_every=5)
    digests = []
    for workers in (1, 8):
        m0 = planar_start(64, 3, "random", seed=9)
        integ = Integrator(m0, build_kernel(2), cfg, Schedule.constant(BETA), workers=workers)
        digests.append(integ.run().digest())
    field = integ.field
    io.write_field(tmp_path / "field.txt", field)
    dump_ok = np.array_equal(io.read_field(tmp_path / "field.txt", field.geometry).values, field.values)
    save_checkpoint(tmp_path / "cp.npz", integ)
    back, _ = load_checkpoint(tmp_path / "cp.npz")
    cp_ok = (
        np.array_equal(back.field.values, field.values)
        and np.array_equal(back.previous.values, integ.previous.values)
        and back.t == integ.t
        and back.step_count == integ.step_count
    )
    dt = time.perf_counter() - t0
    ok = digests[0] == digests[1] and dump_ok and cp_ok and dt < 60
    report(10, ok, f"trace sha256 {digests[0][:12]} equal for 1 and 8 workers, dump and checkpoint bit-exact ({dt:.1f}s)")
