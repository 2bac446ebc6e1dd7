"""Approximate solutions, their residual, and the layer-fiber calculus.

Glues the one-dimensional profile onto a Fermi chart: the approximate
critical point u = chi(d) u*(d/eps) + (1 - chi(d)) sign(d), its PDE
residual, the fiber integral S pairing fields against the layer direction
chi w*(d/eps) along normal rays, and the projection removing that
direction.

The discrete S and the discrete subtraction use the same interpolation
weights, and the projector normalizes with the matrix M = S B of the actual
discrete pairings, so the algebra S(Pi u) = 0 and Pi^2 = Pi holds at
round-off rather than at quadrature order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ._interp import _kernel, interp1_rows, interp2_rows
from .errors import TubeViolation
from .geometry import FermiChart, Interface, ModelManifold, TorusPair, signed_distance
from .potential import DoubleWell, IndicialData
from .profile1d import Profile


# ---------------------------------------------------------------------------
# fields and cutoffs


@dataclass
class Field:
    """Grid-sampled scalar on a model manifold with eps-scaled norm access."""

    values: np.ndarray
    eps: float
    manifold: ModelManifold

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def norm_c0(self) -> float:
        return float(np.max(np.abs(self.values)))

    def check_phase_bounds(self, overshoot: float = 0.1) -> None:
        """Phase fields stay within the wells up to a mild overshoot."""
        if np.max(np.abs(self.values)) > 1.0 + overshoot:
            raise ValueError("phase field exceeds the well range by more than "
                             f"{overshoot}")

    def norm_eps(self, order: int = 2) -> float:
        """max over j <= order of eps^j * sup|j-th divided difference|."""
        out = self.norm_c0()
        v = self.values.reshape(self.manifold.shape)
        steps = _grid_steps(self.manifold)
        cur = {(): v}
        for j in range(1, order + 1):
            nxt = {}
            for key, arr in cur.items():
                for ax, h in enumerate(steps):
                    d = (np.roll(arr, -1, axis=ax) - arr) / h
                    nxt[key + (ax,)] = d
                    out = max(out, self.eps**j * float(np.max(np.abs(d))))
            cur = nxt
        return out


def _grid_steps(man: ModelManifold):
    if man.kind == "torus":
        return (man.params["h1"], man.params["h2"])
    if man.kind == "sphere":
        return (man.params["h"],)
    return (man.params["hr"], man.params["hphi"])


def _smoothstep_c3(s):
    """Septic smoothstep: 0 -> 1 on [0, 1] with three vanishing derivatives."""
    s = np.clip(s, 0.0, 1.0)
    return s**4 * (35.0 - 84.0 * s + 70.0 * s**2 - 20.0 * s**3)


@dataclass(frozen=True)
class CutoffPair:
    """chi: plateau cutoff on the tube; xi: monotone step for the potential."""

    tau0: float

    def chi(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        s = (t - 0.5 * self.tau0) / (0.5 * self.tau0)
        return 1.0 - _smoothstep_c3(s)

    @staticmethod
    def xi(s):
        return _smoothstep_c3((np.asarray(s, dtype=float) + 1.0) / 2.0)


# ---------------------------------------------------------------------------
# approximate solution and residual


def build_approximate(eps: float, chart: FermiChart, profile: Profile) -> Field:
    """u = chi(d) u*(d/eps) + (1 - chi(d)) sign(d)."""
    if eps > chart.tau0 / 2.0:
        raise TubeViolation(f"eps = {eps} exceeds half the tube width {chart.tau0}")
    cut = CutoffPair(chart.tau0)
    chi = cut.chi(chart.dist)
    core = profile.u(chart.dist / eps)
    vals = chi * core + (1.0 - chi) * chart.sign
    return Field(values=vals, eps=eps, manifold=chart.interface.manifold)


def residual(eps: float, chart: FermiChart, profile: Profile,
             manifold: ModelManifold, lam: float = 0.0,
             u: Field | None = None) -> Field:
    """-eps^2 Lap u + W'(u)/2 - eps*lam on the grid (energy-gradient form)."""
    if u is None:
        u = build_approximate(eps, chart, profile)
    W = profile.well
    vals = (eps**2 * manifold.stiffness_apply(u.values)
            + manifold.weights * (0.5 * W.dW(u.values) - eps * lam)) / manifold.weights
    return Field(values=vals, eps=eps, manifold=manifold)


def quadratic_remainder(u_base: np.ndarray, v: np.ndarray, well: DoubleWell) -> np.ndarray:
    """(W'(u+v) - W'(u) - W''(u) v) / 2, the Taylor remainder of the force."""
    return 0.5 * (well.dW(u_base + v) - well.dW(u_base) - well.ddW(u_base) * v)


# ---------------------------------------------------------------------------
# fiber integral and projection


class FiberFrame:
    """Discrete layer-fiber calculus attached to one chart.

    S: ray quadrature of chi(t) u w*(t/eps) per interface node.
    B: grid fields of the subtracted direction, one per interface node
       (cardinal interpolation of the node coefficient times chi w*).
    M = S B: the discrete Gram matrix used to normalize the projection.
    """

    def __init__(self, manifold: ModelManifold, interface: Interface,
                 psi: np.ndarray | None, eps: float, profile: Profile,
                 chart: FermiChart | None = None, n_q: int | None = None):
        self.manifold = manifold
        self.interface = interface
        self.eps = eps
        self.profile = profile
        psi = interface.psi_zero() if psi is None else np.asarray(psi, dtype=float)
        self.psi = psi
        self.chart = chart if chart is not None else signed_distance(manifold, interface, psi)
        tau0 = self.chart.tau0
        self.cut = CutoffPair(tau0)

        steps = _grid_steps(manifold)
        if n_q is None:
            n_q = int(np.ceil(4.0 * tau0 / min(steps)))
        if n_q % 2 == 0:
            n_q += 1
        self.t_nodes = np.linspace(-tau0, tau0, n_q)
        ht = self.t_nodes[1] - self.t_nodes[0]
        wq = np.ones(n_q)
        wq[1:-1:2] = 4.0
        wq[2:-1:2] = 2.0
        self.quad_w = wq * (ht / 3.0)
        self.fiber_t = self.cut.chi(self.t_nodes) * profile.w(self.t_nodes / eps)

        self._build_S(psi)
        self._build_B()
        self.M = np.asarray((self.S @ self.B).todense())
        self._M_lu = None

    # -- assembly ------------------------------------------------------------

    def _build_S(self, psi):
        man, interface = self.manifold, self.interface
        rays = interface.ray_index_coords(psi, self.t_nodes)
        n = man.n_nodes
        rows_all, cols_all, vals_all = [], [], []
        offset = 0
        coeff = self.quad_w * self.cut.chi(self.t_nodes) * self.profile.w(self.t_nodes / self.eps)
        for comp in rays:
            if man.kind == "sphere":
                idx = np.asarray(comp[0], dtype=float).reshape(1, -1)
                m = 1
                cols, wts = interp1_rows(man.shape[0], idx.ravel(), periodic=False)
                stencil = 4
            else:
                idx0 = np.atleast_2d(comp[0])
                idx1 = np.atleast_2d(comp[1])
                m = idx0.shape[0]
                per = (True, True) if man.kind == "torus" else (False, True)
                cols, wts = interp2_rows(man.shape, idx0.ravel(), idx1.ravel(), per)
                stencil = 16
            n_q = len(self.t_nodes)
            rows = (offset + np.repeat(np.arange(m), n_q))[:, None] * np.ones((1, stencil), dtype=int)
            scale = np.tile(coeff, m)[:, None]
            rows_all.append(rows.ravel())
            cols_all.append(cols.ravel())
            vals_all.append((wts * scale).ravel())
            offset += m
        self.n_fibers = offset
        self.S = sp.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(self.n_fibers, n))

    def _build_B(self):
        man, interface, chart = self.manifold, self.interface, self.chart
        tube = chart.tube_mask
        pts = np.where(tube)[0]
        g = self.cut.chi(chart.dist[pts]) * self.profile.w(chart.dist[pts] / self.eps)
        rows_all, cols_all, vals_all = [], [], []
        if man.kind == "sphere":
            rows_all.append(pts)
            cols_all.append(np.zeros(len(pts), dtype=int))
            vals_all.append(g)
        else:
            m = interface.m
            if isinstance(interface, TorusPair):
                hy = interface.p1 / m
            else:
                hy = 2.0 * np.pi / m
            pos = chart.foot[pts] / hy
            base = np.floor(pos).astype(int)
            frac = pos - base
            kern = _kernel(frac)
            comp = chart.component[pts]
            for s_off in range(4):
                col_local = np.mod(base - 1 + s_off, m)
                cols_all.append(comp * m + col_local)
                rows_all.append(pts)
                vals_all.append(kern[:, s_off] * g)
        self.B = sp.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(man.n_nodes, self.n_fibers))

    # -- operations ----------------------------------------------------------

    def fiber_integral(self, u: np.ndarray) -> np.ndarray:
        """S u: one chi w*(./eps)-pairing per interface node."""
        return self.S @ np.asarray(u, dtype=float)

    def project(self, u: np.ndarray) -> np.ndarray:
        """Pi u = u - B M^{-1} S u; annihilated by S, identity off the tube."""
        c = np.linalg.solve(self.M, self.S @ np.asarray(u, dtype=float))
        return u - self.B @ c

    def gram_diagonal(self) -> np.ndarray:
        return np.diag(self.M)


def fiber_integral(u: Field, chart: FermiChart, profile: Profile, eps: float,
                   frame: FiberFrame | None = None) -> np.ndarray:
    frame = frame or FiberFrame(chart.interface.manifold, chart.interface,
                                getattr(chart.interface, "_psi_cache", None), eps, profile, chart)
    return frame.fiber_integral(u.values)


def fiber_project(u: Field, chart: FermiChart, profile: Profile, eps: float,
                  frame: FiberFrame | None = None) -> Field:
    frame = frame or FiberFrame(chart.interface.manifold, chart.interface,
                                getattr(chart.interface, "_psi_cache", None), eps, profile, chart)
    return Field(values=frame.project(u.values), eps=eps, manifold=u.manifold)


# ---------------------------------------------------------------------------
# interpolated potential


@dataclass
class InterpolatedPotential:
    gamma: np.ndarray
    eps: float
    manifold: ModelManifold
    _lu: object

    def solve(self, f: np.ndarray) -> np.ndarray:
        """w with -eps^2 Lap w + Gamma w / 2 = f (natural Neumann data)."""
        return self._lu.solve(self.manifold.weights * np.asarray(f, dtype=float))


def interpolated_potential(chart: FermiChart, eps: float,
                           indicial: IndicialData) -> InterpolatedPotential:
    """Gamma interpolating W''(-1) to W''(+1) across the layer, with solver.

    Gamma = 2[(1 - xi(t/eps)) gamma_-^2 + xi(t/eps) gamma_+^2] in the tube
    and the matching constant on each side outside it.
    """
    man = chart.interface.manifold
    gm2, gp2 = indicial.gamma_minus**2, indicial.gamma_plus**2
    xi = CutoffPair.xi(chart.dist / eps)  # saturates to 0/1 beyond |s| = 1
    gamma = 2.0 * ((1.0 - xi) * gm2 + xi * gp2)
    A = (eps**2 * man.stiffness
         + sp.diags(man.weights * 0.5 * gamma)).tocsc()
    return InterpolatedPotential(gamma=gamma, eps=eps, manifold=man, _lu=splu(A))
