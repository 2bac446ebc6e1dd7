"""Acceptance criteria, one test per criterion, with a printed verdict line.

The sweeps reuse the bundled case definitions; tolerances are pinned here
and nowhere else.  A5a (torus nodal rate) measures a quantity that the
doubly-reflection plus pairing symmetric flat pair pins to exactly zero, so
its log-log fit has no signal; see the repository notes for the analysis.
"""

import time

import numpy as np
import pytest

from aclab.approx import FiberFrame, build_approximate
from aclab.diagnostics import energy, expansion_rows
from aclab.geometry import (
    DiscCircle,
    SphereLatitude,
    TorusPair,
    jacobi_assemble,
    make_disc,
    make_sphere,
    make_torus,
    nondegeneracy_check,
    signed_distance,
    volume_nondegeneracy_check,
)
from aclab.modelops import (
    CrossSection,
    WeightSpec,
    assemble_operator,
    dirichlet_ground_eigenvalue,
    eps_spectrum,
    orthogonality_propagation_check,
    product_solve,
    shoot_homogeneous,
    wronskian,
)
from aclab.potential import make_standard_well
from aclab.profile1d import compute_profile, decay_check
from aclab.solver import (
    SolveConfig,
    continuation,
    lyapunov_schmidt_iterate,
    pde_residual,
)

EPS_SWEEP = (0.1, 0.07, 0.05, 0.035)


def verdict(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def prof():
    return compute_profile(make_standard_well())


@pytest.fixture(scope="module")
def torus_sweep(prof):
    man = make_torus(n1=256, n2=256)
    pair = TorusPair(man, 0.25)
    sym = ("even_x1", "even_x2", "pair_flip")
    cfg = SolveConfig(mode="unconstrained", symmetry=sym, psi_symmetry=sym,
                      continuation_eps=EPS_SWEEP)
    states = continuation(man, prof, cfg, pair)
    rows = expansion_rows(states, man, pair, prof.well)
    return man, pair, cfg, states, rows


@pytest.fixture(scope="module")
def sphere_sweep(prof):
    man = make_sphere(n=4096)
    lat = SphereLatitude(man, np.pi / 3)
    cfg = SolveConfig(mode="constrained", psi_symmetry=("axisym",),
                      continuation_eps=EPS_SWEEP)
    states = continuation(man, prof, cfg, lat)
    rows = expansion_rows(states, man, lat, prof.well)
    return man, lat, cfg, states, rows


@pytest.fixture(scope="module")
def disc_sweep(prof):
    man = make_disc(nr=256, nphi=256)
    circ = DiscCircle(man, 0.5)
    sym = ("mirror_x", "mirror_y")
    cfg = SolveConfig(mode="constrained", symmetry=sym, psi_symmetry=sym,
                      continuation_eps=EPS_SWEEP)
    states = continuation(man, prof, cfg, circ)
    rows = expansion_rows(states, man, circ, prof.well)
    return man, circ, cfg, states, rows


def test_A1_profile_exactness():
    t0 = time.time()
    p = compute_profile(make_standard_well(), T_max=10.0, n_points=8192)
    probe = np.linspace(-10.0, 10.0, 4001)
    tanh_err = float(np.max(np.abs(p.u(probe) - np.tanh(probe))))
    c_err = abs(p.c_star - 4.0 / 3.0)
    rep = decay_check(p)
    elapsed = time.time() - t0
    ok = (tanh_err <= 1e-8 and c_err <= 1e-8
          and abs(rep.rate_plus - 2.0) <= 0.04 and abs(rep.rate_minus - 2.0) <= 0.04
          and elapsed < 1.0)
    verdict("A1 profile exactness", ok,
            f"tanh err {tanh_err:.1e}, c* err {c_err:.1e}, "
            f"rates ({rep.rate_minus:.4f}, {rep.rate_plus:.4f}), {elapsed:.2f}s")


def test_A2_spectral_asymptotics(prof):
    t0 = time.time()
    eps_list = (0.1, 0.05, 0.025)
    mu0, mu1 = [], []
    for eps in eps_list:
        res = eps_spectrum(prof, eps, k=2)
        mu0.append(res.eigenvalues[0])
        mu1.append(res.eigenvalues[1])
    positive = all(m > 0 for m in mu0)
    x = 1.0 / np.asarray(eps_list)
    y = np.log(mu0)
    slope, icpt = np.polyfit(x, y, 1)
    fitted = slope * x + icpt
    r2 = 1.0 - np.sum((y - fitted) ** 2) / np.sum((y - np.mean(y)) ** 2)
    no_collapse = min(mu1) >= 0.5 * mu1[0]
    elapsed = time.time() - t0
    ok = positive and slope < 0 and r2 >= 0.99 and no_collapse and elapsed < 10.0
    verdict("A2 spectral asymptotics", ok,
            f"slope {slope:.3f}, R2 {r2:.6f}, mu1 range "
            f"[{min(mu1):.4f}, {max(mu1):.4f}], {elapsed:.1f}s")


def test_A3_lagrange_multiplier_expansion(sphere_sweep):
    t0 = time.time()
    _, _, _, _, rows = sphere_sweep
    target = 0.5 * (4.0 / 3.0) / np.tan(np.pi / 3)
    eps = np.array([r.eps for r in rows])
    lam = np.array([r.lam for r in rows])
    C_fit, icpt = np.polyfit(eps, lam, 1)
    bounded = np.all(np.abs(lam - target) <= (abs(C_fit) + 0.05) * eps)
    rel = abs(icpt - target) / target
    elapsed = time.time() - t0
    ok = bounded and rel <= 0.03 and elapsed < 60.0
    verdict("A3 multiplier expansion", ok,
            f"intercept {icpt:.5f} vs {target:.5f} ({100 * rel:.2f}%), "
            f"fitted C {C_fit:.3f}, {elapsed:.1f}s")


def test_A4_energy_expansion(torus_sweep):
    _, _, _, _, rows = torus_sweep
    eps = np.array([r.eps for r in rows])
    e_over = np.array([r.energy / r.eps for r in rows])
    slope, icpt = np.polyfit(eps, e_over, 1)
    rel = abs(icpt - 16.0 / 3.0) / (16.0 / 3.0)
    fit_resid = float(np.max(np.abs(e_over - (slope * eps + icpt))))
    # deviations from linearity are the O(eps^2)-and-smaller remainder and
    # must stay well below the leading constant
    ok = rel <= 0.03 and fit_resid <= 0.01 * icpt
    verdict("A4 energy expansion", ok,
            f"intercept {icpt:.5f} vs {16 / 3:.5f} ({100 * rel:.2f}%), "
            f"fit residual {fit_resid:.2e}")


def test_A5a_nodal_rate_torus(torus_sweep):
    _, _, _, _, rows = torus_sweep
    eps = np.array([r.eps for r in rows])
    dist = np.array([max(r.nodal_hausdorff, 1e-300) for r in rows])
    slope = np.polyfit(np.log(eps), np.log(dist), 1)[0]
    ok = abs(slope - 2.0) <= 0.3
    verdict("A5a torus nodal rate", ok,
            f"log-log slope {slope:.3f} on distances "
            + ", ".join(f"{d:.2e}" for d in dist))


def test_A5b_nodal_rate_disc(disc_sweep):
    _, _, _, _, rows = disc_sweep
    eps = np.array([r.eps for r in rows])
    dist = np.array([r.nodal_hausdorff for r in rows])
    slope = np.polyfit(np.log(eps), np.log(dist), 1)[0]
    ok = abs(slope - 1.0) <= 0.3
    verdict("A5b disc nodal rate", ok,
            f"log-log slope {slope:.3f} on distances "
            + ", ".join(f"{d:.2e}" for d in dist))


def test_A6_oracle_equivalence(prof, torus_sweep, sphere_sweep, disc_sweep):
    worst = 0.0
    details = []
    for name, (man, interface, cfg, states, _) in (
            ("torus", torus_sweep), ("sphere", sphere_sweep), ("disc", disc_sweep)):
        newton_state = states[EPS_SWEEP.index(0.05)]
        ls_state = lyapunov_schmidt_iterate(man, prof, cfg, 0.05, interface)
        gap = float(np.max(np.abs(ls_state.u.values - newton_state.u.values)))
        worst = max(worst, gap)
        details.append(f"{name} {gap:.2e}")
    ok = worst <= 10 * 1e-9
    verdict("A6 oracle equivalence", ok, ", ".join(details))


def test_A7_linear_theory_suite(prof):
    t0 = time.time()
    checks = []

    # projector algebra on the torus chart
    man = make_torus(n1=256, n2=256)
    pair = TorusPair(man, 0.25)
    chart = signed_distance(man, pair)
    frame = FiberFrame(man, pair, None, 0.05, prof, chart)
    n1, n2 = man.shape
    x1 = (np.arange(n1) / n1)[:, None]
    x2 = (np.arange(n2) / n2)[None, :]
    u = (np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
         + 0.2 * np.cos(4 * np.pi * x1) + np.zeros((n1, n2))).ravel()
    Pu = frame.project(u)
    checks.append(("Pi idempotent", np.max(np.abs(frame.project(Pu) - Pu)) <= 1e-8))
    checks.append(("S o Pi = 0", np.max(np.abs(frame.fiber_integral(Pu))) <= 1e-8))

    # orthogonality propagation
    cross = CrossSection("circle", length=1.0, n=32)
    grid = np.linspace(-8.0, 8.0, 801)
    g = grid * prof.w(grid)
    f = np.outer(g, np.cos(2 * np.pi * cross.nodes))
    rep = orthogonality_propagation_check(prof, cross, f, T=8.0)
    checks.append(("orthogonality propagation", rep.ok))

    # fiber identity S o L = O(eps^2)
    consts = []
    for eps in (0.05, 0.035, 0.025):
        fr = FiberFrame(man, pair, None, eps, prof, chart)
        w = fr.project(u)
        ua = build_approximate(eps, chart, prof)
        Lw = (eps**2 * man.stiffness_apply(w)
              + man.weights * 0.5 * prof.well.ddW(ua.values) * w) / man.weights
        consts.append(np.max(np.abs(fr.fiber_integral(Lw))) / np.max(np.abs(w)) / eps**2)
    checks.append(("fiber identity O(eps^2)", max(consts) <= 1.0))

    # uniform projected-solve ratios
    fsmooth = np.outer(np.exp(-grid**2), 1.0 + 0.3 * np.cos(2 * np.pi * cross.nodes))
    ratios = [product_solve(prof, cross, fsmooth, WeightSpec(-0.5, -0.5),
                            eps=e, T=8.0).norm_ratio for e in (0.2, 0.1, 0.05)]
    checks.append(("uniform solve ratios", max(ratios) <= 3.0 * min(ratios)))

    # Dirichlet positivity for zeta >= 0
    pos = []
    for zeta in (0.0, 1.0):
        op = assemble_operator(prof, -6.0, 6.0, 1200, zeta=zeta)
        pos.append(dirichlet_ground_eigenvalue(op) > 0)
    checks.append(("Dirichlet positivity", all(pos)))

    # non-vanishing homogeneous solutions for zeta > 0
    signs = []
    for zeta in (0.5, 1.0, 4.0):
        for side in ("minus", "plus"):
            signs.append(shoot_homogeneous(prof, zeta, side, T=8.0).sign_changes() == 0)
    checks.append(("w_zeta non-vanishing", all(signs)))

    # Wronskian t-independence
    spreads = [wronskian(prof, z)[1] for z in (1.0, 4.0)]
    checks.append(("Wronskian constant", max(spreads) <= 1e-6))

    elapsed = time.time() - t0
    failed = [name for name, ok in checks if not ok]
    ok = not failed and elapsed < 30.0
    verdict("A7 linear-theory suite", ok,
            f"{len(checks)} checks, failed: {failed or 'none'}, {elapsed:.1f}s")


def test_A8_geometry_identities(prof):
    checks = []

    torus = make_torus(n1=256, n2=256)
    sphere = make_sphere(n=2048)
    disc = make_disc(nr=256, nphi=256)
    pair = TorusPair(torus, 0.25)
    lat3 = SphereLatitude(sphere, np.pi / 3)
    circ = DiscCircle(disc, 0.5)

    # eikonal on all three
    ch_t = signed_distance(torus, pair)
    d = ch_t.dist.reshape(torus.shape)
    h1, h2 = torus.params["h1"], torus.params["h2"]
    g1 = (np.roll(d, -1, 0) - np.roll(d, 1, 0)) / (2 * h1)
    g2 = (np.roll(d, -1, 1) - np.roll(d, 1, 1)) / (2 * h2)
    grad = np.sqrt(g1**2 + g2**2)
    mask = (np.abs(d) < 0.6 * ch_t.tau0) & (np.abs(d) > 2 * h2)
    checks.append(("torus eikonal", np.max(np.abs(grad[mask.reshape(torus.shape)] - 1.0)) <= 5e-3))

    ch_s = signed_distance(sphere, lat3)
    gs = np.gradient(ch_s.dist, sphere.params["h"])
    m = np.abs(ch_s.dist) < 0.6 * ch_s.tau0
    checks.append(("sphere eikonal", np.max(np.abs(np.abs(gs[m]) - 1.0)) <= 5e-3))

    psi = 0.05 * np.cos(2 * disc.params["phi"])
    ch_d = signed_distance(disc, circ, psi)
    dd = ch_d.dist.reshape(disc.shape)
    hr, hphi = disc.params["hr"], disc.params["hphi"]
    r = disc.params["r"][:, None]
    dr = (dd[2:, :] - dd[:-2, :]) / (2 * hr)
    dphi = (np.roll(dd, -1, 1) - np.roll(dd, 1, 1))[1:-1] / (2 * hphi * r[1:-1])
    gd = np.sqrt(dr**2 + dphi**2)
    md = np.abs(dd[1:-1]) < 0.6 * ch_d.tau0
    checks.append(("disc eikonal", np.max(np.abs(gd[md] - 1.0)) <= 5e-3))

    # Laplacian-curvature identity, O(h) in the half tube
    for name, man, interface, hscale in (
            ("torus", torus, pair, h1), ("sphere", sphere, lat3, sphere.params["h"]),
            ("disc", disc, circ, hr)):
        chart = signed_distance(man, interface, None)
        lap = man.laplacian(chart.dist)
        mk = np.abs(chart.dist) <= 0.5 * chart.tau0
        if man.kind == "torus":
            H_t = np.zeros(int(np.sum(mk)))
        else:
            H_t = interface.parallel_curvature(chart.dist[mk])
        resid = np.max(np.abs(lap[mk] + H_t))
        checks.append((f"{name} Delta d = -H", resid <= 60.0 * hscale))

    # closed-form Jacobi spectrum on the equator
    eq = SphereLatitude(sphere, np.pi / 2)
    J = jacobi_assemble(sphere, eq)
    eigs = sorted((J.mode_eigenvalue(k) for (_, k, _) in eq.allowed_modes(())),
                  reverse=True)[:3]
    checks.append(("equator spectrum", np.allclose(eigs, [1.0, 0.0, -3.0], atol=1e-6)))

    # verdicts mirror the worked examples
    checks.append(("equator degenerate", not nondegeneracy_check(J, ()).nondegenerate))
    checks.append(("equator restricted", nondegeneracy_check(J, ("mirror_y",)).nondegenerate))
    J3 = jacobi_assemble(sphere, lat3)
    checks.append(("latitude volume-degenerate", not volume_nondegeneracy_check(J3, ()).nondegenerate))
    checks.append(("latitude restricted", volume_nondegeneracy_check(J3, ("mirror_y",)).nondegenerate))
    Jt = jacobi_assemble(torus, pair)
    checks.append(("pair degenerate", not nondegeneracy_check(Jt, ("even_x1", "even_x2")).nondegenerate))
    checks.append(("pair pinned", nondegeneracy_check(
        Jt, ("even_x1", "even_x2", "pair_flip")).nondegenerate))
    Jd = jacobi_assemble(disc, circ)
    checks.append(("circle volume-degenerate", not volume_nondegeneracy_check(Jd, ()).nondegenerate))
    checks.append(("circle restricted", volume_nondegeneracy_check(
        Jd, ("mirror_x", "mirror_y")).nondegenerate))

    failed = [name for name, ok in checks if not ok]
    verdict("A8 geometry identities", not failed,
            f"{len(checks)} checks, failed: {failed or 'none'}")


def test_A9_gradient_consistency(prof, torus_sweep, sphere_sweep, disc_sweep):
    # evaluate away from criticality so the gradient has O(1) scale and the
    # relative comparison is meaningful
    from aclab.approx import Field

    rng = np.random.default_rng(17)
    worst = 0.0
    for man, _, _, states, _ in (torus_sweep, sphere_sweep, disc_sweep):
        state = states[-1]
        eps = state.eps
        u = state.u.values + 0.15 * np.cos(np.arange(man.n_nodes) * 0.001)
        F = pde_residual(man, prof, eps, u, 0.0)
        for _ in range(10):
            w = rng.standard_normal(man.n_nodes)
            s = 1e-5
            Ep = energy(Field(values=u + s * w, eps=eps, manifold=man), man, prof.well, eps)
            Em = energy(Field(values=u - s * w, eps=eps, manifold=man), man, prof.well, eps)
            dE = (Ep - Em) / (2 * s)
            inner = 2.0 * float(man.weights @ (F * w))
            worst = max(worst, abs(dE - inner) / max(abs(dE), abs(inner), 1e-300))
    verdict("A9 gradient consistency", worst <= 1e-6,
            f"worst relative deviation {worst:.2e} over 30 random directions")
