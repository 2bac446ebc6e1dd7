import numpy as np
import pytest

from aclab.approx import (
    CutoffPair,
    FiberFrame,
    Field,
    build_approximate,
    fiber_integral,
    fiber_project,
    interpolated_potential,
    quadratic_remainder,
    residual,
)
from aclab.errors import TubeViolation
from aclab.geometry import DiscCircle, SphereLatitude, TorusPair, make_disc, make_sphere, make_torus, signed_distance
from aclab.potential import make_standard_well
from aclab.profile1d import compute_profile


@pytest.fixture(scope="module")
def prof():
    return compute_profile(make_standard_well(), T_max=10.0, n_points=8192)


@pytest.fixture(scope="module")
def torus_setup(prof):
    man = make_torus(n1=256, n2=256)
    pair = TorusPair(man, 0.25)
    chart = signed_distance(man, pair)
    return man, pair, chart


def test_cutoffs():
    cut = CutoffPair(tau0=0.2)
    assert np.all(cut.chi(np.linspace(-0.1, 0.1, 11)) == 1.0)
    assert np.all(cut.chi(np.array([0.2, 0.3, -0.25])) == 0.0)
    chi = cut.chi(np.linspace(-0.3, 0.3, 601))
    assert np.all((chi >= 0.0) & (chi <= 1.0))
    xi = CutoffPair.xi(np.linspace(-2, 2, 101))
    assert np.all(np.diff(xi) >= 0)
    assert xi[0] == 0.0 and xi[-1] == 1.0


def test_build_approximate_structure(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    u = build_approximate(eps, chart, prof)
    n1, n2 = man.shape
    vals = u.values.reshape(n1, n2)
    x2 = (np.arange(n2) / n2)
    # far field: exactly +-1 outside the tube
    far_plus = np.abs(chart.dist.reshape(n1, n2)) >= chart.tau0
    assert np.all(np.abs(np.abs(vals[far_plus]) - 1.0) == 0.0)
    assert np.max(np.abs(vals)) <= 1.0
    # slice through x2: profile matches tanh(d/eps) in the half tube
    d = chart.dist.reshape(n1, n2)[0]
    mask = np.abs(d) <= chart.tau0 / 2
    assert np.max(np.abs(vals[0][mask] - np.tanh(d[mask] / eps))) <= 2e-4
    # u vanishes on the interface (nodes on x2 = 1/4 exist for n2 = 256)
    j = np.argmin(np.abs(x2 - 0.25))
    assert abs(vals[0, j]) <= 1e-10


def test_build_approximate_eps_guard(prof, torus_setup):
    man, pair, chart = torus_setup
    with pytest.raises(TubeViolation):
        build_approximate(0.15, chart, prof)


def test_residual_torus_flat(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    F = residual(eps, chart, prof, man)
    h = man.params["h1"]
    bound = np.exp(-2.0 * chart.tau0 / (2 * eps)) + h**2 / eps**2
    assert F.norm_c0() <= 1.5 * bound


def test_residual_localized(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    F = residual(eps, chart, prof, man)
    h = man.params["h2"]
    outside = np.abs(chart.dist) > chart.tau0 + 2 * h
    assert np.max(np.abs(F.values[outside])) == 0.0


def test_residual_sphere_equator_oracle(prof):
    man = make_sphere(n=4096)
    eq = SphereLatitude(man, np.pi / 2)
    chart = signed_distance(man, eq)
    eps = 0.05
    F = residual(eps, chart, prof, man)
    mask = np.abs(chart.dist) <= chart.tau0 / 2
    oracle = eps * np.tan(chart.dist[mask]) * prof.w(chart.dist[mask] / eps)
    h = man.params["h"]
    err = np.max(np.abs(F.values[mask] - oracle))
    assert err <= 3.0 * (eps**2 + h**2 / eps**2)


def test_residual_disc_scale(prof):
    man = make_disc(nr=1024, nphi=16)
    circ = DiscCircle(man, 0.5)
    chart = signed_distance(man, circ)
    eps_list = (0.05, 0.035, 0.025)
    vals = [residual(e, chart, prof, man).norm_c0() / e for e in eps_list]
    fit = np.polyfit(eps_list, vals, 1)
    # |Q|/eps -> max_t |H_t| w*(t/eps) = w*(0) max|H| = 2 for r0 = 1/2
    assert fit[1] == pytest.approx(2.0, rel=0.02)


def test_projector_algebra(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    frame = FiberFrame(man, pair, None, eps, prof, chart)
    n1, n2 = man.shape
    x1 = (np.arange(n1) / n1)[:, None]
    x2 = (np.arange(n2) / n2)[None, :]
    u = (np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2) + 0.3 * np.cos(4 * np.pi * x1)
         + np.zeros((n1, n2))).ravel()
    Pu = frame.project(u)
    # idempotent and annihilated by the fiber integral
    assert np.max(np.abs(frame.project(Pu) - Pu)) <= 1e-8
    assert np.max(np.abs(frame.fiber_integral(Pu))) <= 1e-8 * np.max(np.abs(frame.fiber_integral(u)))
    # identity outside the tube
    out = ~chart.tube_mask
    assert np.max(np.abs(Pu[out] - u[out])) == 0.0
    # fixed point: projecting an already-orthogonal field changes nothing
    assert np.max(np.abs(frame.project(Pu) - Pu)) <= 1e-12 * max(1.0, np.max(np.abs(Pu)))


def test_projector_kills_fiber_direction(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    frame = FiberFrame(man, pair, None, eps, prof, chart)
    g = frame.cut.chi(chart.dist) * prof.w(chart.dist / eps)
    Pg = frame.project(g)
    assert np.max(np.abs(Pg)) <= 1e-10 * np.max(np.abs(g))


def test_fiber_integral_values(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    frame = FiberFrame(man, pair, None, eps, prof, chart)
    # odd-in-d field integrates to zero against the even fiber
    Sd = frame.fiber_integral(chart.dist)
    assert np.max(np.abs(Sd)) <= 1e-8
    # the fiber direction itself: S = integral chi^2 w*^2 ~ eps c*
    g = frame.cut.chi(chart.dist) * prof.w(chart.dist / eps)
    Sg = frame.fiber_integral(g)
    assert np.ptp(Sg) <= 1e-10
    assert Sg[0] / eps == pytest.approx(prof.c_star, rel=5e-3)


def test_fiber_wrappers(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    u = Field(values=np.cos(2 * np.pi * np.arange(man.n_nodes) / man.n_nodes),
              eps=eps, manifold=man)
    S = fiber_integral(u, chart, prof, eps)
    Pu = fiber_project(u, chart, prof, eps)
    assert S.shape == (2 * pair.m,)
    assert Pu.values.shape == u.values.shape


def test_fiber_integral_of_disc_residual(prof):
    # S(Q)/eps^2 approaches c* n H for the concentric circle
    man = make_disc(nr=1024, nphi=16)
    circ = DiscCircle(man, 0.5)
    chart = signed_distance(man, circ)
    vals = []
    eps_list = (0.05, 0.035, 0.025)
    for eps in eps_list:
        F = residual(eps, chart, prof, man)
        frame = FiberFrame(man, circ, None, eps, prof, chart)
        S = frame.fiber_integral(F.values) / eps**2
        assert np.ptp(S) <= 1e-6 * max(1.0, np.max(np.abs(S)))
        vals.append(S.mean())
    fit = np.polyfit(eps_list, vals, 1)
    assert fit[1] == pytest.approx(prof.c_star * (-2.0), rel=0.02)


def test_quadratic_remainder(prof):
    W = prof.well
    assert np.max(np.abs(quadratic_remainder(np.zeros(5), np.zeros(5), W))) == 0.0
    # closed form at u = 0: (W'(c) - W'(0) - W''(0) c)/2 = 2 c^3
    for c in (0.1, -0.2, 0.05):
        got = quadratic_remainder(np.zeros(1), np.array([c]), W)[0]
        assert got == pytest.approx(2.0 * c**3, abs=1e-14)
    # quadratic scaling in the perturbation
    rng = np.random.default_rng(7)
    u = rng.uniform(-0.9, 0.9, size=100)
    v = 0.01 * rng.standard_normal(100)
    r1 = np.max(np.abs(quadratic_remainder(u, v, W)))
    r2 = np.max(np.abs(quadratic_remainder(u, 2 * v, W)))
    assert r2 / r1 == pytest.approx(4.0, rel=0.1)


def test_interpolated_potential(prof, torus_setup):
    man, pair, chart = torus_setup
    eps = 0.05
    pot = interpolated_potential(chart, eps, prof.indicial)
    # symmetric quartic: Gamma is the constant 2 gamma^2 = 8
    assert np.max(np.abs(pot.gamma - 8.0)) <= 1e-12
    w = pot.solve(np.ones(man.n_nodes))
    assert np.max(np.abs(w - 0.25)) <= 1e-10
    # uniform invertibility across the sweep (constant plus one smooth mode;
    # the eps^2-Laplacian contribution shrinks, the bound must not grow)
    n1, n2 = man.shape
    x1 = (np.arange(n1) / n1)[:, None]
    f = (1.0 + 0.3 * np.cos(2 * np.pi * x1) + np.zeros((n1, n2))).ravel()
    ratios = []
    for eps_k in (0.2, 0.1, 0.05):
        pot_k = interpolated_potential(chart, eps_k, prof.indicial)
        w = pot_k.solve(f)
        ratios.append(np.max(np.abs(w)) / np.max(np.abs(f)))
    assert max(ratios) <= 1.2 * min(ratios)
    assert max(ratios) <= 1.0 / 4.0 + 0.1


def test_fiber_identity_eps2(prof):
    # S(L_eps w) = O(eps^2) for fiberwise-orthogonal w
    man = make_torus(n1=256, n2=256)
    pair = TorusPair(man, 0.25)
    chart = signed_distance(man, pair)
    n1, n2 = man.shape
    x1 = (np.arange(n1) / n1)[:, None]
    x2 = (np.arange(n2) / n2)[None, :]
    base = (np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * x2) + 0.2 * np.cos(4 * np.pi * x2)
            + np.zeros((n1, n2))).ravel()
    sizes = []
    # at eps = 0.1 the tube truncation e^{-gamma tau0/eps} is not yet below
    # eps^2; the quadratic regime needs eps <= tau0/4
    eps_list = (0.05, 0.035, 0.025)
    for eps in eps_list:
        frame = FiberFrame(man, pair, None, eps, prof, chart)
        w = frame.project(base)
        u_apx = build_approximate(eps, chart, prof)
        Lw = (eps**2 * man.stiffness_apply(w)
              + man.weights * 0.5 * prof.well.ddW(u_apx.values) * w) / man.weights
        S = frame.fiber_integral(Lw)
        sizes.append(np.max(np.abs(S)) / np.max(np.abs(w)))
    # bounded by C eps^2 with a common constant across the sweep
    consts = [s / e**2 for s, e in zip(sizes, eps_list)]
    assert max(consts) <= 1.0
