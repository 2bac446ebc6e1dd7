import json

import numpy as np
import pytest

from aclab.approx import Field, build_approximate
from aclab.cli import main as cli_main
from aclab.diagnostics import (
    energy,
    evaluate_assertions,
    load_config,
    nodal_distance,
    nodal_set,
    run_config,
    volume_functional,
    write_table,
)
from aclab.errors import ConfigError, EmptyNodalSet
from aclab.geometry import DiscCircle, TorusPair, make_disc, make_torus, signed_distance
from aclab.potential import make_standard_well
from aclab.profile1d import compute_profile


@pytest.fixture(scope="module")
def prof():
    return compute_profile(make_standard_well())


@pytest.fixture(scope="module")
def torus():
    return make_torus(n1=128, n2=128)


def test_energy_constants(prof, torus):
    ones = Field(values=np.ones(torus.n_nodes), eps=0.1, manifold=torus)
    assert energy(ones, torus, prof.well, 0.1) == 0.0
    zero = Field(values=np.zeros(torus.n_nodes), eps=0.1, manifold=torus)
    assert energy(zero, torus, prof.well, 0.1) == pytest.approx(1.0, abs=1e-12)


def test_energy_refinement_second_order(prof):
    # fixed smooth field: |E(h) - E(h/2)| = O(h^2)
    def E(n):
        man = make_torus(n1=n, n2=n)
        x1 = (np.arange(n) / n)[:, None]
        x2 = (np.arange(n) / n)[None, :]
        u = (np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2) + np.zeros((n, n))).ravel()
        return energy(Field(values=u, eps=0.1, manifold=man), man, prof.well, 0.1)

    e1, e2, e3 = E(64), E(128), E(256)
    assert abs(e2 - e3) <= abs(e1 - e2) / 3.0


def test_volume_functional(torus):
    c0 = 0.37
    u = Field(values=np.full(torus.n_nodes, c0), eps=0.1, manifold=torus)
    assert volume_functional(u, torus) == pytest.approx(c0 * torus.area, abs=1e-12)
    n1, n2 = torus.shape
    x2 = (np.arange(n2) / n2)[None, :] + np.zeros((n1, 1))
    odd = Field(values=np.sin(2 * np.pi * x2).ravel(), eps=0.1, manifold=torus)
    assert abs(volume_functional(odd, torus)) <= 1e-12


def test_nodal_exact_on_linear_data(torus):
    n1, n2 = torus.shape
    x2 = (np.arange(n2) / n2)[None, :] + np.zeros((n1, 1))
    u = Field(values=(x2 - 0.25).ravel(), eps=0.1, manifold=torus)
    segs = nodal_set(u, torus)
    # linear interpolation is exact on linear data: all vertices on x2 = 1/4
    x2v = segs[..., 1].ravel()
    near_quarter = np.abs(x2v - 0.25) < 0.2
    assert np.max(np.abs(x2v[near_quarter] - 0.25)) <= 1e-12


def test_nodal_negation_invariance(prof, torus):
    pair = TorusPair(torus, 0.25)
    chart = signed_distance(torus, pair)
    u = build_approximate(0.06, chart, prof)
    segs_pos = nodal_set(u, torus)
    segs_neg = nodal_set(Field(values=-u.values, eps=u.eps, manifold=torus), torus)
    assert segs_pos.shape == segs_neg.shape
    assert np.max(np.abs(np.sort(segs_pos.ravel()) - np.sort(segs_neg.ravel()))) <= 1e-12


def test_nodal_distance_disc(prof):
    man = make_disc(nr=128, nphi=128)
    circ = DiscCircle(man, 0.5)
    chart = signed_distance(man, circ)
    u = build_approximate(0.06, chart, prof)
    segs = nodal_set(u, man)
    d = nodal_distance(segs, circ, man)
    assert d <= man.params["hr"]


def test_empty_nodal_set(torus):
    u = Field(values=np.full(torus.n_nodes, 0.5), eps=0.1, manifold=torus)
    with pytest.raises(EmptyNodalSet):
        nodal_set(u, torus)


def test_table_format(tmp_path):
    from aclab.diagnostics import ExpansionRow
    rows = [ExpansionRow(eps=0.1, energy=1.0 / 3.0, lam=0.0,
                         nodal_hausdorff=1e-3, volume_gap=0.0)]
    path = tmp_path / "table.csv"
    write_table(rows, path)
    text = path.read_text().splitlines()
    assert text[0] == "eps,energy,lambda,nodal_hausdorff,volume_gap"
    # 17 significant digits survive the round trip
    assert float(text[1].split(",")[1]) == 1.0 / 3.0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[manifold]\nkind = 'torus'\n")
    with pytest.raises(ConfigError, match="interface"):
        load_config(bad)
    missing_well = tmp_path / "nowell.toml"
    missing_well.write_text("""
[manifold]
kind = "torus"
[interface]
kind = "parallel_pair"
[well]
other = 1
[solver]
eps = [0.1]
""")
    from aclab.diagnostics import build_problem
    with pytest.raises(ConfigError, match="well"):
        build_problem(load_config(missing_well))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_assertions_unknown_kind():
    from aclab.diagnostics import ExpansionRow
    rows = [ExpansionRow(0.1, 1.0, 0.0, 1e-3, 0.0),
            ExpansionRow(0.05, 0.5, 0.0, 5e-4, 0.0)]
    with pytest.raises(ConfigError):
        evaluate_assertions(rows, {"bogus": 1})


@pytest.fixture(scope="module")
def small_case(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small_sphere.toml"
    path.write_text("""
[manifold]
kind = "sphere"
n = 1024

[interface]
kind = "latitude"
theta0 = 1.0471975511965976

[well]
well = "quartic"

[solver]
mode = "constrained"
eps = [0.1, 0.07]
psi_symmetry = ["axisym"]

[assertions]
volume_gap_max = 1e-9
""")
    return path


def test_run_config_deterministic(small_case, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert run_config(small_case, out_dir=out1) == 0
    assert run_config(small_case, out_dir=out2) == 0
    assert (out1 / "table.csv").read_bytes() == (out2 / "table.csv").read_bytes()
    assert (out1 / "state.json").read_bytes() == (out2 / "state.json").read_bytes()
    report = json.loads((out1 / "report.json").read_text())
    assert report["all_passed"]


def test_run_config_failure_report(tmp_path, small_case):
    text = small_case.read_text().replace(
        "volume_gap_max = 1e-9",
        'lambda_intercept = { target = 100.0, rtol = 0.001 }')
    failing = tmp_path / "failing.toml"
    failing.write_text(text)
    out = tmp_path / "out"
    assert run_config(failing, out_dir=out) == 1
    assert (out / "failures.txt").exists()


def test_cli_profile(tmp_path):
    out = tmp_path / "profile.csv"
    rc = cli_main(["profile", "--well", "quartic", "--tmax", "6", "--points",
                   "2048", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,u,w"
    assert len(lines) == 2049
    t, u, w = map(float, lines[1024].split(","))
    assert u == pytest.approx(np.tanh(t), abs=1e-8)


def test_cli_spectrum(tmp_path):
    out = tmp_path / "spec.csv"
    rc = cli_main(["spectrum", "--eps", "0.1,0.05", "--modes", "2", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "eps,mu0,mu1"
    row = [float(v) for v in lines[1].split(",")]
    assert row[1] > 0 and row[2] > 2.5


def test_cli_run_and_solve(tmp_path, small_case):
    rc = cli_main(["run", "--config", str(small_case), "--out", str(tmp_path / "run")])
    assert rc == 0
    rc = cli_main(["solve", "--config", str(small_case), "--out",
                   str(tmp_path / "state.json")])
    assert rc == 0
    state = json.loads((tmp_path / "state.json").read_text())
    assert state["converged"]
    assert len(state["u"]) == 1024


def test_cli_error_exit(tmp_path):
    rc = cli_main(["run", "--config", str(tmp_path / "nope.toml")])
    assert rc == 2


def test_cli_sweep_parallel_matches_schema(tmp_path, small_case):
    out = tmp_path / "table_par.csv"
    rc = cli_main(["--threads", "2", "sweep", "--config", str(small_case),
                   "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "eps,energy,lambda,nodal_hausdorff,volume_gap"
    assert len(lines) == 3
