"""Nonlinear solvers for the phase-field critical-point problem.

Two routes to the same discrete critical point:

* newton_full: bordered Newton on the discretized equation (with the volume
  constraint row in constrained mode), symmetry-projected each step.  This
  is the ground-truth oracle.
* lyapunov_schmidt_iterate: the reduction scheme; alternates a linear solve
  for the layer-orthogonal correction v (fiber constraints enforced through
  a bordered saddle system) with an interface/multiplier update driven by
  the rescaled fiber integral of the full residual through the Jacobi
  operator, the graph smoothed spectrally each sweep.

Both iterate until the same residual tolerance, so agreement between them
separates discretization error from scheme error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.fft import irfft, rfft
from scipy.sparse.linalg import splu

from .approx import Field, FiberFrame, build_approximate
from .errors import (
    BoxViolation,
    ContractionFailure,
    JacobiSingular,
    NewtonDivergence,
    ResolutionError,
    SingularJacobian,
)
from .geometry import (
    DiscCircle,
    Interface,
    ModelManifold,
    SphereLatitude,
    TorusPair,
    jacobi_assemble,
    nondegeneracy_check,
    signed_distance,
    smooth_psi,
    volume_nondegeneracy_check,
)
from .profile1d import Profile


@dataclass
class SolveConfig:
    mode: str = "unconstrained"          # or "constrained"
    symmetry: tuple = ()                 # manifold reflections applied to u
    psi_symmetry: tuple = ()             # reflections applied to the graph
    tol_r: float = 1e-9
    tol_c: float = 1e-10
    max_newton: int = 30
    max_outer: int = 60
    continuation_eps: tuple = ()
    psi_sup_bound: float | None = None   # a-priori box on the graph
    psi_grad_bound: float = 1.0

    def __post_init__(self):
        if self.mode not in ("unconstrained", "constrained"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tol_r <= 0 or self.tol_c <= 0:
            raise ValueError("tolerances must be positive")
        if len(self.continuation_eps) > 1:
            if not all(a > b for a, b in zip(self.continuation_eps,
                                             self.continuation_eps[1:])):
                raise ValueError("continuation schedule must be strictly decreasing")


@dataclass
class SolverState:
    u: Field
    lam: float
    eps: float
    interface_psi: np.ndarray
    residual_norm: float
    constraint_gap: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# helpers


def pde_residual(manifold: ModelManifold, profile: Profile, eps: float,
                 u: np.ndarray, lam: float) -> np.ndarray:
    """-eps^2 Lap u + W'(u)/2 - eps lam; exact gradient of the discrete energy."""
    W = profile.well
    return (eps**2 * manifold.stiffness_apply(u)
            + manifold.weights * (0.5 * W.dW(u) - eps * lam)) / manifold.weights


def estimate_psi(manifold: ModelManifold, interface: Interface, u: np.ndarray) -> np.ndarray:
    """Normal-graph estimate of the nodal set from 1d crossings."""
    if isinstance(interface, TorusPair):
        n1, n2 = manifold.shape
        h2 = manifold.params["h2"]
        vals = u.reshape(n1, n2)
        x2 = np.arange(n2) * h2
        pp = np.empty(n1)
        pm = np.empty(n1)
        for i in range(n1):
            zp = _crossing_near(x2, vals[i], interface.alpha, manifold.params["p2"])
            zm = _crossing_near(x2, vals[i], -interface.alpha + manifold.params["p2"]
                                if interface.alpha > 0 else 0.0, manifold.params["p2"])
            pp[i] = interface.alpha - zp
            pm[i] = (zm - (manifold.params["p2"] - interface.alpha)) \
                if interface.alpha > 0 else zm
        return np.concatenate([pp, pm])
    if isinstance(interface, SphereLatitude):
        theta = manifold.params["theta"]
        z = _crossing_near(theta, u, interface.theta0, None)
        return np.array([interface.theta0 - z])
    if isinstance(interface, DiscCircle):
        nr, nphi = manifold.shape
        vals = u.reshape(nr, nphi)
        r = manifold.params["r"]
        out = np.empty(nphi)
        for j in range(nphi):
            out[j] = _crossing_near(r, vals[:, j], interface.r0, None) - interface.r0
        return out
    raise ValueError("unsupported interface")


def _crossing_near(x: np.ndarray, vals: np.ndarray, target: float, period) -> float:
    s = np.sign(vals)
    idx = np.where(s[:-1] * s[1:] < 0)[0]
    cand = list(x[np.where(vals == 0.0)[0]])  # exact node zeros (pinned case)
    if len(idx):
        cand.extend(x[idx] - vals[idx] * (x[idx + 1] - x[idx]) / (vals[idx + 1] - vals[idx]))
    if not cand:
        return float(target)
    cand = np.asarray(cand, dtype=float)
    if period is not None:
        dist = np.abs((cand - target + period / 2) % period - period / 2)
    else:
        dist = np.abs(cand - target)
    return float(cand[np.argmin(dist)])


def _check_box(cfg: SolveConfig, interface: Interface, psi: np.ndarray, tau0: float):
    sup = cfg.psi_sup_bound if cfg.psi_sup_bound is not None else tau0 / 4.0
    if np.max(np.abs(psi)) > sup:
        raise BoxViolation(f"graph sup {np.max(np.abs(psi)):.3e} exceeds the box {sup:.3e}")
    if psi.size >= 4:
        m = interface.m
        comps = [psi[:m], psi[m:]] if isinstance(interface, TorusPair) else [psi]
        hy = (interface.p1 if isinstance(interface, TorusPair) else
              2 * np.pi * getattr(interface, "r0", 1.0)) / m
        for c in comps:
            grad = np.max(np.abs(np.roll(c, -1) - c)) / hy
            if grad > cfg.psi_grad_bound:
                raise BoxViolation(f"graph slope {grad:.3e} exceeds the box")


# ---------------------------------------------------------------------------
# full Newton oracle


def newton_full(manifold: ModelManifold, profile: Profile, cfg: SolveConfig,
                eps: float, u0: Field, lam0: float = 0.0,
                interface: Interface | None = None) -> SolverState:
    """Bordered Newton with symmetry projection and step backtracking."""
    h_min = min(_min_step(manifold))
    if eps < 4.0 * h_min:
        raise ResolutionError(f"eps = {eps} below the 4h resolution rule")
    W = profile.well
    omega = manifold.weights
    target = cfg.mode == "constrained"
    c0 = getattr(interface, "c0_target", lambda: 0.0)() if interface is not None else 0.0
    vol_target = c0 * manifold.area

    u = manifold.symmetrize(u0.values, cfg.symmetry)
    lam = float(lam0)
    history = []
    bad_steps = 0

    def merit(uv, lv):
        F = pde_residual(manifold, profile, eps, uv, lv)
        gap = float(omega @ uv - vol_target) if target else 0.0
        return F, max(np.max(np.abs(F)), abs(gap) if target else 0.0), gap

    F, m0, gap = merit(u, lam)
    history.append(m0)
    it = 0
    converged = False
    for it in range(1, cfg.max_newton + 1):
        if np.max(np.abs(F)) <= cfg.tol_r and (not target or abs(gap) <= cfg.tol_c):
            converged = True
            break
        A = (eps**2 * manifold.stiffness
             + sp.diags(omega * 0.5 * W.ddW(u))).tocsc()
        try:
            lu = splu(A)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        rhs = omega * F
        if target:
            # block elimination of [[A, -eps w], [w^T, 0]] d = [wF; gap]
            z1 = lu.solve(rhs)
            z2 = lu.solve(eps * omega)
            denom = float(omega @ z2)
            if abs(denom) < 1e-14 * manifold.area:
                raise SingularJacobian("constraint row lost; symmetry set insufficient")
            dlam = (gap - float(omega @ z1)) / denom
            du = z1 + dlam * z2
        else:
            du = lu.solve(rhs)
            dlam = 0.0
        du = manifold.symmetrize(du, cfg.symmetry)
        if not np.all(np.isfinite(du)) or np.max(np.abs(du)) > 1e6:
            raise SingularJacobian("update blew up; symmetry set insufficient")

        step = 1.0
        for _ in range(6):
            u_try = u - step * du
            lam_try = lam - step * dlam
            F_try, m_try, gap_try = merit(u_try, lam_try)
            if m_try < history[-1] or m_try <= cfg.tol_r:
                break
            step *= 0.5
        u, lam, F, gap = u_try, lam_try, F_try, gap_try
        history.append(m_try)
        if m_try >= 0.99 * history[-2]:
            bad_steps += 1
            if bad_steps >= 3:
                raise NewtonDivergence(f"residual stuck at {m_try:.3e}")
        else:
            bad_steps = 0

    if not converged and np.max(np.abs(F)) <= cfg.tol_r and \
            (not target or abs(gap) <= cfg.tol_c):
        converged = True  # tolerance met on the last allowed step

    psi_est = estimate_psi(manifold, interface, u) if interface is not None \
        else np.zeros(1)
    if interface is not None:
        chart = signed_distance(manifold, interface, None)
        _check_box(cfg, interface, psi_est, chart.tau0)
    return SolverState(u=Field(values=u, eps=eps, manifold=manifold), lam=lam,
                       eps=eps, interface_psi=psi_est,
                       residual_norm=float(np.max(np.abs(F))),
                       constraint_gap=gap, iterations=it, converged=converged,
                       residual_history=history)


def _min_step(man: ModelManifold):
    if man.kind == "torus":
        return (man.params["h1"], man.params["h2"])
    if man.kind == "sphere":
        return (man.params["h"],)
    return (man.params["hr"],)


def seed_state(manifold: ModelManifold, profile: Profile, interface: Interface,
               eps: float, mode: str) -> tuple[Field, float]:
    """Approximate solution and leading multiplier guess for the seed."""
    chart = signed_distance(manifold, interface, None)
    u0 = build_approximate(eps, chart, profile)
    lam0 = 0.0
    if mode == "constrained":
        H = float(np.mean(interface.curvature(interface.psi_zero())))
        lam0 = 0.5 * profile.c_star * H
    return u0, lam0


# ---------------------------------------------------------------------------
# two-step reduction iteration


def _jacobi_update(interface: Interface, profile: Profile, cfg: SolveConfig,
                   RS: np.ndarray, r_V: float, constrained: bool):
    """Solve c* L dpsi - 2 dlam = -RS (+ volume row) in closed mode form."""
    cs = profile.c_star
    q = interface.jacobi_q()
    if isinstance(interface, SphereLatitude):
        if constrained:
            lenN = interface.length(np.zeros(1))
            # [c* q, -2; -2 lenN, 0] [dpsi; dlam] = [-RS; -r_V]
            Amat = np.array([[cs * q, -2.0], [-2.0 * lenN, 0.0]])
            sol = np.linalg.solve(Amat, np.array([-float(RS[0]), -r_V]))
            return np.array([sol[0]]), float(sol[1])
        return np.array([-float(RS[0]) / (cs * q)]), 0.0

    if isinstance(interface, DiscCircle):
        m = interface.m
        kap = interface.mode_kappa()
        R = rfft(RS)
        dpsi_hat = np.zeros_like(R)
        dlam = 0.0
        for k in range(1, len(kap)):
            ev = cs * (q - kap[k] ** 2)
            if abs(ev) < 1e-12:
                continue  # symmetry-excluded zero mode carries no load
            dpsi_hat[k] = -R[k] / ev
        if constrained:
            lenN = 2 * np.pi * interface.r0
            # mean-mode block coupled to the multiplier; mean(RS) = R[0]/m
            Amat = np.array([[cs * q, -2.0], [-2.0 * lenN, 0.0]])
            sol = np.linalg.solve(Amat, np.array([-(R[0].real / m), -r_V]))
            dpsi_hat[0] = sol[0] * m
            dlam = float(sol[1])
        else:
            dpsi_hat[0] = -(R[0].real) / (cs * q)
        return irfft(dpsi_hat, n=m), dlam

    if isinstance(interface, TorusPair):
        # within the fully pinned class the graph never moves; outside it the
        # flat pair has no invertible Jacobi operator and is refused upstream
        return np.zeros(interface.psi_size), 0.0
    raise ValueError("unsupported interface")


def lyapunov_schmidt_iterate(manifold: ModelManifold, profile: Profile,
                             cfg: SolveConfig, eps: float,
                             interface: Interface) -> SolverState:
    """Alternating projected solve and interface move, to tolerance tol_r."""
    constrained = cfg.mode == "constrained"
    J = jacobi_assemble(manifold, interface)
    verdict = (volume_nondegeneracy_check(J, cfg.psi_symmetry) if constrained
               else nondegeneracy_check(J, cfg.psi_symmetry))
    if not verdict.nondegenerate:
        raise JacobiSingular(
            f"reference interface degenerate in the declared class "
            f"(min |eig| = {verdict.min_abs_eigenvalue:.2e})")

    omega = manifold.weights
    W = profile.well
    vol_target = interface.c0_target() * manifold.area if constrained else 0.0

    psi = interface.psi_zero()
    lam = 0.0
    if constrained:
        lam = 0.5 * profile.c_star * float(np.mean(interface.curvature(psi)))
    u_total = None
    trace = []
    res_hist = []
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        psi = smooth_psi(interface, psi, 1.0 / eps)
        psi = interface.symmetrize_psi(psi, cfg.psi_symmetry)
        chart = signed_distance(manifold, interface, psi)
        _check_box(cfg, interface, psi, chart.tau0)
        frame = FiberFrame(manifold, interface, psi, eps, profile, chart)
        uN = build_approximate(eps, chart, profile).values
        if u_total is None:
            v = np.zeros_like(uN)
        else:
            v = frame.project(u_total - uN)
        u = uN + v

        F = pde_residual(manifold, profile, eps, u, lam)
        gap = float(omega @ u - vol_target) if constrained else 0.0
        res = max(np.max(np.abs(F)), abs(gap) if constrained else 0.0)
        if res <= cfg.tol_r and (not constrained or abs(gap) <= cfg.tol_c):
            u_total = u
            converged = True
            trace.append((it, res, float(np.max(np.abs(v))), float(np.max(np.abs(psi))), lam, gap))
            break

        # (a) projected linear solve for the layer-orthogonal correction
        A = (eps**2 * manifold.stiffness
             + sp.diags(omega * 0.5 * W.ddW(u))).tocsc()
        C = sp.csr_matrix(frame.B.multiply(omega[:, None]))
        n, m = C.shape
        sys = sp.bmat([[A, C], [frame.S, None]], format="csc")
        rhs = np.concatenate([-omega * F, -frame.fiber_integral(v)])
        try:
            sol = splu(sys).solve(rhs)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        dv = manifold.symmetrize(sol[:n], cfg.symmetry)
        v = v + dv
        u = uN + v

        # (b) interface and multiplier move from the rescaled fiber residual
        F = pde_residual(manifold, profile, eps, u, lam)
        RS = frame.fiber_integral(F) / eps**2
        gap = float(omega @ u - vol_target) if constrained else 0.0
        dpsi, dlam = _jacobi_update(interface, profile, cfg, RS, gap, constrained)
        psi = interface.symmetrize_psi(psi + dpsi, cfg.psi_symmetry)
        lam += dlam
        u_total = u

        res = max(np.max(np.abs(F)), abs(gap) if constrained else 0.0)
        res_hist.append(res)
        trace.append((it, res, float(np.max(np.abs(v))), float(np.max(np.abs(psi))), lam, gap))
        if len(res_hist) >= 6 and res_hist[-1] > 0.9 * res_hist[-6] and res > cfg.tol_r * 10:
            raise ContractionFailure(
                f"combined residual stalled near {res:.3e} after {it} sweeps")

    F = pde_residual(manifold, profile, eps, u_total, lam)
    gap = float(omega @ u_total - vol_target) if constrained else 0.0
    return SolverState(u=Field(values=u_total, eps=eps, manifold=manifold),
                       lam=lam, eps=eps, interface_psi=psi,
                       residual_norm=float(np.max(np.abs(F))),
                       constraint_gap=gap, iterations=it, converged=converged,
                       trace=trace, residual_history=res_hist)


# ---------------------------------------------------------------------------
# continuation


def continuation(manifold: ModelManifold, profile: Profile, cfg: SolveConfig,
                 interface: Interface) -> list:
    """Warm-started Newton sweep over the configured descending schedule."""
    states = []
    u_prev = None
    for eps in cfg.continuation_eps:
        u0, lam0 = seed_state(manifold, profile, interface, eps, cfg.mode)
        if u_prev is not None:
            # reuse the previous phase region; rebuild the layer at new width
            psi_prev = estimate_psi(manifold, interface, u_prev)
            psi_prev = interface.symmetrize_psi(psi_prev, cfg.psi_symmetry)
            try:
                chart = signed_distance(manifold, interface, psi_prev)
                u0 = build_approximate(eps, chart, profile)
            except Exception:
                pass
        try:
            state = newton_full(manifold, profile, cfg, eps, u0, lam0, interface)
        except Exception as exc:
            raise type(exc)(f"eps = {eps}: {exc}") from exc
        states.append(state)
        u_prev = state.u.values
    return states
