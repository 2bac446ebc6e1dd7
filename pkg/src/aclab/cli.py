"""Command-line front end: profile, spectrum, geometry, residual, solve,
sweep, and declarative run subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .approx import build_approximate, residual as residual_field
from .errors import LabError
from .geometry import signed_distance
from .modelops import eps_spectrum
from .potential import well_from_config
from .profile1d import compute_profile


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cmd_profile(args):
    well = well_from_config(args.well)
    prof = compute_profile(well, T_max=args.tmax, n_points=args.points)
    _write_csv(args.out, "t,u,w",
               zip(prof.grid_t, prof.u_values, prof.w_values))
    return 0


def _cmd_spectrum(args):
    well = well_from_config(args.well)
    prof = compute_profile(well)
    eps_list = [float(e) for e in args.eps.split(",")]
    rows = []
    for eps in eps_list:
        res = eps_spectrum(prof, eps, k=args.modes)
        rows.append([eps] + [float(m) for m in res.eigenvalues])
    header = "eps," + ",".join(f"mu{j}" for j in range(args.modes))
    _write_csv(args.out, header, rows)
    return 0


def _cmd_geometry(args):
    cfg = diagnostics.load_config(args.config)
    manifold, interface, _, _, _ = diagnostics.build_problem(cfg)
    chart = signed_distance(manifold, interface, None)
    if args.check == "eikonal":
        lap = manifold.laplacian(chart.dist)
        rows = zip(chart.dist, lap, chart.tube_mask.astype(float))
        _write_csv(args.out, "dist,laplacian,in_tube", rows)
        return 0
    raise LabError(f"unknown geometry check {args.check!r}")


def _cmd_residual(args):
    cfg = diagnostics.load_config(args.geometry)
    manifold, interface, well, _, _ = diagnostics.build_problem(cfg)
    prof = compute_profile(well)
    chart = signed_distance(manifold, interface, None)
    F = residual_field(args.eps, chart, prof, manifold)
    u = build_approximate(args.eps, chart, prof)
    _write_csv(args.out, "dist,u,residual", zip(chart.dist, u.values, F.values))
    return 0


def _cmd_solve(args):
    cfg = diagnostics.load_config(args.config)
    manifold, interface, well, solve_cfg, scheme = diagnostics.build_problem(cfg)
    prof = compute_profile(well)
    eps = solve_cfg.continuation_eps[-1]
    if scheme == "ls":
        from .solver import lyapunov_schmidt_iterate
        state = lyapunov_schmidt_iterate(manifold, prof, solve_cfg, eps, interface)
    else:
        from .solver import newton_full, seed_state
        u0, lam0 = seed_state(manifold, prof, interface, eps, solve_cfg.mode)
        state = newton_full(manifold, prof, solve_cfg, eps, u0, lam0, interface)
    diagnostics.write_state_json(state, manifold, args.out)
    return 0


def _sweep_one_eps(config_path: str, eps: float):
    """Worker for parallel sweeps: solve one independent case cold-seeded."""
    cfg = diagnostics.load_config(config_path)
    cfg["solver"]["eps"] = [eps]
    manifold, interface, well, solve_cfg, _ = diagnostics.build_problem(cfg)
    prof = compute_profile(well)
    from .solver import newton_full, seed_state
    u0, lam0 = seed_state(manifold, prof, interface, eps, solve_cfg.mode)
    state = newton_full(manifold, prof, solve_cfg, eps, u0, lam0, interface)
    row = diagnostics.expansion_rows([state], manifold, interface, well)[0]
    return row


def _cmd_sweep(args):
    cfg = diagnostics.load_config(args.config)
    if args.eps:
        cfg.setdefault("solver", {})["eps"] = [float(e) for e in args.eps.split(",")]
    manifold, interface, well, solve_cfg, _ = diagnostics.build_problem(cfg)
    if args.threads > 1:
        # independent eps cases, cold-seeded, collected in schedule order
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_sweep_one_eps,
                                 [args.config] * len(solve_cfg.continuation_eps),
                                 solve_cfg.continuation_eps))
    else:
        prof = compute_profile(well)
        from .solver import continuation
        states = continuation(manifold, prof, solve_cfg, interface)
        rows = diagnostics.expansion_rows(states, manifold, interface, well)
    diagnostics.write_table(rows, args.out)
    return 0


def _cmd_run(args):
    return diagnostics.run_config(args.config, out_dir=args.out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lab",
                                     description="phase-transition interface laboratory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count for independent sweep cases")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed recorded for deterministic reruns")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="tabulate the layer profile")
    p.add_argument("--well", default="quartic")
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--points", type=int, default=8192)
    p.add_argument("--out", default="profile.csv")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("spectrum", help="scaled Dirichlet spectra on [-1,1]")
    p.add_argument("--eps", default="0.1,0.05,0.025")
    p.add_argument("--modes", type=int, default=4)
    p.add_argument("--well", default="quartic")
    p.add_argument("--out", default="spec.csv")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("geometry", help="geometry identity residuals")
    p.add_argument("--config", required=True)
    p.add_argument("--check", default="eikonal")
    p.add_argument("--out", default="geometry.csv")
    p.set_defaults(func=_cmd_geometry)

    p = sub.add_parser("residual", help="residual of the glued approximation")
    p.add_argument("--geometry", required=True, help="case config supplying the geometry")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--out", default="residual.csv")
    p.set_defaults(func=_cmd_residual)

    p = sub.add_parser("solve", help="solve one case to state.json")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="state.json")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="continuation sweep to table.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", default=None)
    p.add_argument("--out", default="table.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("run", help="run a declarative case with assertions")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_run)

    args = parser.parse_args(argv)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
