"""Model surfaces, interfaces as normal graphs, Fermi data and Jacobi theory.

Three model geometries are discretized: a flat rectangular torus, the unit
round sphere reduced to its axisymmetric meridian, and the flat unit disc in
polar coordinates.  Interfaces are closed curves given as normal graphs over
a reference curve: a pair of parallel circles on the torus, a latitude on
the sphere, a concentric circle (or a diameter chord, assembly only) on the
disc.

Laplace operators are assembled variationally, as a stiffness form K with
u^T K u approximating the Dirichlet energy, so the discrete PDE residual is
exactly the gradient of the discrete energy under the quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.fft import irfft, rfft

from .errors import TubeViolation


# ---------------------------------------------------------------------------
# manifolds


@dataclass(frozen=True)
class ModelManifold:
    """Structured-grid surface with quadrature weights and stiffness form.

    The stiffness is carried both assembled (for Jacobians) and in factored
    edge form K = D^T diag(c) D.  Residuals and energies use the edge form:
    differences of equal node values are exact zeros, so locally constant
    fields produce exactly vanishing forces even where the quadrature
    weights are tiny (the polar cells near the disc center).
    """

    kind: str                  # "torus" | "sphere" | "disc"
    shape: tuple               # logical grid shape
    weights: np.ndarray        # per-node quadrature weights, flattened
    stiffness: sp.csr_matrix   # u^T K u ~ integral |grad u|^2
    incidence: sp.csr_matrix   # edge-node difference matrix D
    conductance: np.ndarray    # per-edge weights c
    area: float
    ricci_normal: float
    params: dict

    @property
    def n_nodes(self) -> int:
        return self.weights.size

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        return self.incidence.T @ (self.conductance * (self.incidence @ u))

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return -self.stiffness_apply(u) / self.weights

    def integrate(self, u: np.ndarray) -> float:
        return float(self.weights @ u)

    def dirichlet_energy(self, u: np.ndarray) -> float:
        du = self.incidence @ u
        return float(self.conductance @ (du * du))

    # -- symmetry group -----------------------------------------------------

    def symmetry_ops(self, names) -> list:
        """Index permutations (with sign) for the named reflections."""
        ops = []
        if self.kind == "torus":
            n1, n2 = self.shape
            i = np.arange(n1)[:, None]
            j = np.arange(n2)[None, :]
            for name in names:
                if name == "even_x1":
                    perm = ((-i) % n1) * n2 + j
                    ops.append((perm.ravel(), 1.0))
                elif name == "even_x2":
                    perm = i * n2 + ((-j) % n2)
                    ops.append((perm.ravel(), 1.0))
                elif name == "pair_flip":
                    perm = i * n2 + ((j + n2 // 2) % n2)
                    ops.append((perm.ravel(), -1.0))
                else:
                    raise ValueError(f"unknown torus symmetry {name!r}")
        elif self.kind == "sphere":
            (n,) = self.shape
            for name in names:
                if name == "equatorial":
                    ops.append((np.arange(n)[::-1].copy(), 1.0))
                else:
                    raise ValueError(f"unknown sphere symmetry {name!r}")
        elif self.kind == "disc":
            nr, nphi = self.shape
            i = np.arange(nr)[:, None]
            j = np.arange(nphi)[None, :]
            for name in names:
                if name == "mirror_x":      # phi -> -phi
                    perm = i * nphi + ((-j) % nphi)
                    ops.append((perm.ravel(), 1.0))
                elif name == "mirror_y":    # phi -> pi - phi
                    perm = i * nphi + ((nphi // 2 - j) % nphi)
                    ops.append((perm.ravel(), 1.0))
                else:
                    raise ValueError(f"unknown disc symmetry {name!r}")
        return ops

    def symmetrize(self, u: np.ndarray, names) -> np.ndarray:
        """Group-average over the listed commuting involutions."""
        out = np.array(u, dtype=float)
        for perm, sign in self.symmetry_ops(names):
            out = 0.5 * (out + sign * out[perm])
        return out


def _edge_matrices(edges, conductances, n):
    """Incidence D (per edge u_b - u_a) and K = D^T diag(c) D."""
    e = len(edges)
    rows = np.repeat(np.arange(e), 2)
    cols = np.asarray(edges, dtype=int).ravel()
    vals = np.tile([-1.0, 1.0], e)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(e, n))
    c = np.asarray(conductances, dtype=float)
    K = sp.csr_matrix(D.T @ sp.diags(c) @ D)
    return D, c, K


def make_torus(p1: float = 1.0, p2: float = 1.0, n1: int = 256, n2: int = 256) -> ModelManifold:
    h1, h2 = p1 / n1, p2 / n2
    weights = np.full(n1 * n2, h1 * h2)
    idx = np.arange(n1 * n2).reshape(n1, n2)
    edges = []
    cond = []
    edges.extend(zip(idx.ravel(), np.roll(idx, -1, axis=0).ravel()))
    cond.extend([h2 / h1] * (n1 * n2))
    edges.extend(zip(idx.ravel(), np.roll(idx, -1, axis=1).ravel()))
    cond.extend([h1 / h2] * (n1 * n2))
    D, c, K = _edge_matrices(edges, cond, n1 * n2)
    return ModelManifold(kind="torus", shape=(n1, n2), weights=weights,
                         stiffness=K, incidence=D, conductance=c,
                         area=p1 * p2, ricci_normal=0.0,
                         params={"p1": p1, "p2": p2, "h1": h1, "h2": h2})


def make_sphere(n: int = 4096) -> ModelManifold:
    """Axisymmetric reduction of the unit round sphere; cell-centered in theta."""
    h = np.pi / n
    faces = np.arange(n + 1) * h
    weights = 2.0 * np.pi * (np.cos(faces[:-1]) - np.cos(faces[1:]))
    cond = 2.0 * np.pi * np.sin(faces[1:-1]) / h
    edges = list(zip(np.arange(n - 1), np.arange(1, n)))
    D, c, K = _edge_matrices(edges, cond, n)
    return ModelManifold(kind="sphere", shape=(n,), weights=weights,
                         stiffness=K, incidence=D, conductance=c,
                         area=4.0 * np.pi, ricci_normal=1.0,
                         params={"h": h, "theta": (np.arange(n) + 0.5) * h})


def make_disc(nr: int = 256, nphi: int = 256) -> ModelManifold:
    """Flat unit disc; cell-centered in r, node-centered periodic in phi."""
    hr, hphi = 1.0 / nr, 2.0 * np.pi / nphi
    r = (np.arange(nr) + 0.5) * hr
    weights = np.repeat(r * hr * hphi, nphi)

    edges, cond = [], []
    for i in range(nr - 1):
        cr = (i + 1) * hr * hphi / hr      # face radius (i+1)hr
        for j in range(nphi):
            edges.append((i * nphi + j, (i + 1) * nphi + j))
            cond.append(cr)
    for i in range(nr):
        cp = hr / (r[i] * hphi)
        for j in range(nphi):
            edges.append((i * nphi + j, i * nphi + (j + 1) % nphi))
            cond.append(cp)
    D, c, K = _edge_matrices(edges, cond, nr * nphi)
    return ModelManifold(kind="disc", shape=(nr, nphi), weights=weights,
                         stiffness=K, incidence=D, conductance=c,
                         area=np.pi, ricci_normal=0.0,
                         params={"hr": hr, "hphi": hphi, "r": r,
                                 "phi": np.arange(nphi) * hphi})


def make_manifold(kind: str, **kwargs) -> ModelManifold:
    if kind == "torus":
        return make_torus(**kwargs)
    if kind == "sphere":
        return make_sphere(**kwargs)
    if kind == "disc":
        return make_disc(**kwargs)
    raise ValueError(f"unknown manifold kind {kind!r}")


# ---------------------------------------------------------------------------
# interfaces


@dataclass(frozen=True)
class FermiChart:
    """Signed distance, foot parameters and tube data for one interface."""

    interface: "Interface"
    dist: np.ndarray           # signed distance, valid in the tube; saturated
    sign: np.ndarray           # +-1 side indicator on the whole grid
    foot: np.ndarray           # foot parameter (radians / length), NaN off-tube
    component: np.ndarray      # interface component index, -1 off-tube
    tube_mask: np.ndarray
    tau0: float

    def h_t(self, t, y, comp=None):
        return self.interface.parallel_curvature(t, y, comp)


class Interface:
    """Shared behavior of the reference-plus-graph interfaces."""

    manifold: ModelManifold
    n_components = 1

    def psi_zero(self) -> np.ndarray:
        return np.zeros(self.psi_size)

    def length(self, psi) -> float:
        raise NotImplementedError

    # symmetry restriction of graph functions
    def symmetrize_psi(self, psi, names):
        return psi


def wrap(x, period):
    return (x + 0.5 * period) % period - 0.5 * period


class TorusPair(Interface):
    """Two parallel circles x2 = +-alpha; the normal points into the band."""

    n_components = 2

    def __init__(self, manifold: ModelManifold, alpha: float = 0.25):
        if manifold.kind != "torus":
            raise ValueError("TorusPair lives on the torus")
        self.manifold = manifold
        self.alpha = float(alpha)
        self.p1 = manifold.params["p1"]
        self.p2 = manifold.params["p2"]
        self.m = manifold.shape[0]
        self.psi_size = 2 * self.m
        self.y = np.arange(self.m) * (self.p1 / self.m)

    # psi layout: [psi_plus(x1 nodes), psi_minus(x1 nodes)]
    def split(self, psi):
        return psi[: self.m], psi[self.m:]

    def curves_x2(self, psi):
        pp, pm = self.split(psi)
        return self.alpha - pp, -self.alpha + pm

    def length(self, psi) -> float:
        hy = self.p1 / self.m
        total = 0.0
        for c in self.curves_x2(psi):
            dc = (np.roll(c, -1) - c) / hy
            total += float(np.sum(np.sqrt(1.0 + dc**2)) * hy)
        return total

    def jacobi_q(self) -> float:
        return 0.0

    def mode_kappa(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.m // 2 + 1) / self.p1

    def node_weights(self) -> np.ndarray:
        return np.full(self.psi_size, self.p1 / self.m)

    def curvature(self, psi) -> np.ndarray:
        """H of each component against the into-band normal (flat graphs).

        For the upper component the band lies below the graph x2 = c(x1)
        and H = -c''/(1+c'^2)^{3/2}, so dH/dpsi is the circle Laplacian.
        """
        hy = self.p1 / self.m
        out = []
        for c, orient in zip(self.curves_x2(psi), (-1.0, 1.0)):
            d1 = (np.roll(c, -1) - np.roll(c, 1)) / (2 * hy)
            d2 = (np.roll(c, -1) - 2 * c + np.roll(c, 1)) / hy**2
            out.append(orient * d2 / (1.0 + d1**2) ** 1.5)
        return np.concatenate(out)

    def parallel_curvature(self, t, y=None, comp=None):
        """Curvature of the parallel curve at offset t (flat ambient)."""
        psi = getattr(self, "_psi_cache", self.psi_zero())
        H0 = self.curvature(psi)
        hy = self.p1 / self.m
        if y is None:
            H = H0[: self.m]
        else:
            comp = np.zeros_like(np.asarray(y), dtype=int) if comp is None else np.asarray(comp)
            pos = np.mod(np.asarray(y, dtype=float) / hy, self.m)
            base = np.floor(pos).astype(int)
            frac = pos - base
            Hc = np.stack([H0[: self.m], H0[self.m:]])
            H = (1 - frac) * Hc[comp, base] + frac * Hc[comp, (base + 1) % self.m]
        return H / (1.0 - np.asarray(t) * H)

    def chart(self, psi, tau0=None) -> FermiChart:
        man = self.manifold
        n1, n2 = man.shape
        x1 = (np.arange(n1) * man.params["h1"])[:, None] + np.zeros((1, n2))
        x2 = (np.arange(n2) * man.params["h2"])[None, :] + np.zeros((n1, 1))
        x2w = wrap(x2, self.p2)
        cp, cm = self.curves_x2(psi)
        # graph curves: evaluate at each node's own x1 (psi stays small)
        cp_g = np.interp(x1.ravel(), np.append(self.y, self.p1), np.append(cp, cp[0])).reshape(n1, n2)
        cm_g = np.interp(x1.ravel(), np.append(self.y, self.p1), np.append(cm, cm[0])).reshape(n1, n2)
        inside = (x2w > cm_g) & (x2w < cp_g)
        sign = np.where(inside, 1.0, -1.0)

        tau0 = self._tau0() if tau0 is None else tau0
        if np.max(np.abs(psi)) > tau0 / 4.0 + 1e-12:
            raise TubeViolation("graph leaves a quarter of the Fermi tube")

        # distance to each component curve (flat metric, x1-periodic)
        d_p, foot_p = self._dist_to_graph(x1, x2w, cp, sign_into=-1.0)
        d_m, foot_m = self._dist_to_graph(x1, x2w, cm, sign_into=+1.0)
        use_p = np.abs(d_p) <= np.abs(d_m)
        dist = np.where(use_p, d_p, d_m) * sign
        comp = np.where(use_p, 0, 1)
        foot = np.where(use_p, foot_p, foot_m)
        tube = np.abs(dist) < tau0
        foot = np.where(tube, foot, np.nan)
        comp = np.where(tube, comp, -1)
        return FermiChart(interface=self, dist=dist.ravel(), sign=sign.ravel(),
                          foot=foot.ravel(), component=comp.ravel(),
                          tube_mask=tube.ravel(), tau0=tau0)

    def _dist_to_graph(self, x1, x2w, c_nodes, sign_into):
        """Unsigned distance and foot x1 to the graph x2 = c(x1)."""
        hy = self.p1 / self.m
        cs = np.fft.rfft(c_nodes)
        if np.max(np.abs(c_nodes - c_nodes[0])) < 1e-14:
            d = np.abs(wrap(x2w - c_nodes[0], self.p2))
            return d, np.mod(x1, self.p1)
        # Newton on the foot parameter for a genuinely curved graph
        k = 2.0 * np.pi * np.arange(len(cs)) / self.p1

        def c_eval(yy, order=0):
            ph = np.exp(1j * np.outer(yy, k))
            coef = cs * (1j * k) ** order
            return (ph @ coef).real * (2.0 / self.m) - (coef[0].real / self.m) * (order == 0)

        y = np.mod(x1.ravel(), self.p1)
        px2 = x2w.ravel()
        for _ in range(8):
            cy = c_eval(y)
            c1 = c_eval(y, 1)
            c2 = c_eval(y, 2)
            # minimize wrap(y-x1)^2 + (c(y)-x2)^2 over the foot parameter y
            dy = wrap(y - x1.ravel(), self.p1)
            grad = dy + (cy - px2) * c1
            hess = 1.0 + c1**2 + (cy - px2) * c2
            step = grad / np.where(np.abs(hess) < 0.5, 0.5, hess)
            y = np.mod(y - np.clip(step, -hy * 10, hy * 10), self.p1)
        dy = wrap(y - x1.ravel(), self.p1)
        d = np.sqrt(dy**2 + (c_eval(y) - px2) ** 2)
        return d.reshape(x1.shape), y.reshape(x1.shape)

    def _tau0(self) -> float:
        # tube width is fixed by the reference pair, not the current graph
        clearance = min(self.alpha, self.p2 / 2.0 - self.alpha)
        return 0.8 * clearance

    def ray_index_coords(self, psi, t_nodes):
        """Fractional grid indices of the normal rays of both components."""
        man = self.manifold
        h1, h2 = man.params["h1"], man.params["h2"]
        hy = self.p1 / self.m
        out = []
        for c, nu in zip(self.curves_x2(psi), (-1.0, +1.0)):
            d1 = (np.roll(c, -1) - np.roll(c, 1)) / (2 * hy)
            norm = np.sqrt(1.0 + d1**2)
            # normal pointing into the band
            nx = nu * d1 / norm * (-1.0)
            ny = nu / norm
            px = self.y[:, None] + np.outer(nx, t_nodes)
            pyc = c[:, None] + np.outer(ny, t_nodes)
            out.append((np.mod(px / h1, man.shape[0]), np.mod(pyc / h2, man.shape[1])))
        return out

    def symmetrize_psi(self, psi, names):
        pp, pm = self.split(np.array(psi, dtype=float))
        if "even_x1" in names:
            pp = 0.5 * (pp + np.roll(pp[::-1], 1))
            pm = 0.5 * (pm + np.roll(pm[::-1], 1))
        if "even_x2" in names:
            avg = 0.5 * (pp + pm)
            pp = pm = avg
        if "pair_flip" in names:
            diff = 0.5 * (pp - pm)
            pp, pm = diff, -diff
        return np.concatenate([pp, pm])

    def allowed_modes(self, names):
        """(component parity, wavenumber, index) surviving the symmetry set.

        The x2-reflection pairs the components symmetrically (psi+ = psi-),
        the translate-and-flip pairing antisymmetrically; imposing both
        leaves only the trivial graph, which is how the pair is pinned.
        """
        kap = self.mode_kappa()
        parities = {"sym", "anti"}
        if "even_x2" in names:
            parities.discard("anti")
        if "pair_flip" in names:
            parities.discard("sym")
        return [(parity, float(k), i)
                for parity in sorted(parities)
                for i, k in enumerate(kap)]

    def c0_target(self) -> float:
        return 4.0 * self.alpha / self.p2 - 1.0

    def enclosed_reference(self) -> tuple[float, float]:
        plus = 2.0 * self.alpha * self.p1
        return plus, self.manifold.area - plus

    def target_distance_xy(self, pts) -> np.ndarray:
        """Distance of torus points to the reference pair (wrap metric)."""
        x2 = wrap(pts[:, 1], self.p2)
        return np.minimum(np.abs(np.abs(x2) - self.alpha),
                          np.abs(self.p2 - np.abs(x2) - self.alpha))


class SphereLatitude(Interface):
    """Latitude circle at colatitude theta0; normal toward the north pole.

    The PDE discretization is the axisymmetric reduction (psi is a single
    normal offset), but the Jacobi bookkeeping carries the full circle modes
    so degeneracy from the ambient rotations is visible.
    """

    def __init__(self, manifold: ModelManifold, theta0: float, m_modes: int = 64):
        if manifold.kind != "sphere":
            raise ValueError("SphereLatitude lives on the axisymmetric sphere")
        self.manifold = manifold
        self.theta0 = float(theta0)
        self.psi_size = 1
        self.m = m_modes
        self.y = np.arange(m_modes) * (2.0 * np.pi / m_modes)

    def theta_N(self, psi) -> float:
        return self.theta0 - float(np.asarray(psi).ravel()[0])

    def length(self, psi) -> float:
        return 2.0 * np.pi * np.sin(self.theta_N(psi))

    def jacobi_q(self) -> float:
        # |A|^2 + Ric(nu,nu) = cot^2 + 1 on the unit sphere
        return 1.0 / np.sin(self.theta0) ** 2

    def mode_kappa(self) -> np.ndarray:
        return np.arange(self.m // 2 + 1) / np.sin(self.theta0)

    def allowed_modes(self, names):
        ks = np.arange(self.m // 2 + 1)
        keep = np.ones(len(ks), dtype=bool)
        if "axisym" in names:
            keep &= ks == 0
        if "mirror_y" in names:
            keep &= ks % 2 == 0
        s = np.sin(self.theta0)
        return [("cos", float(k / s), int(k)) for k in ks[keep]]

    def node_weights(self) -> np.ndarray:
        return np.full(self.m, self.length(np.zeros(1)) / self.m)

    def curvature(self, psi) -> np.ndarray:
        return np.array([1.0 / np.tan(self.theta_N(psi))])

    def parallel_curvature(self, t, y=None, comp=None):
        return 1.0 / np.tan(self.theta_N(getattr(self, "_psi_cache", 0.0)) - np.asarray(t))

    def chart(self, psi, tau0=None) -> FermiChart:
        theta = self.manifold.params["theta"]
        thN = self.theta_N(psi)
        d = thN - theta
        tau0 = self._tau0() if tau0 is None else tau0
        if np.abs(np.asarray(psi).ravel()[0]) > tau0 / 4.0 + 1e-12:
            raise TubeViolation("latitude shift leaves a quarter of the tube")
        tube = np.abs(d) < tau0
        sign = np.where(d > 0, 1.0, -1.0)
        return FermiChart(interface=self, dist=d, sign=sign,
                          foot=np.where(tube, 0.0, np.nan),
                          component=np.where(tube, 0, -1), tube_mask=tube,
                          tau0=tau0)

    def _tau0(self) -> float:
        H = abs(1.0 / np.tan(self.theta0))
        clearance = min(self.theta0, np.pi - self.theta0)
        cap = 0.8 * clearance
        return min(0.4 / H, cap) if H > 1e-12 else cap

    def ray_index_coords(self, psi, t_nodes):
        thN = self.theta_N(psi)
        h = self.manifold.params["h"]
        idx = (thN - t_nodes) / h - 0.5
        return [(idx,)]

    def c0_target(self) -> float:
        return -np.cos(self.theta0)

    def enclosed_reference(self) -> tuple[float, float]:
        plus = 2.0 * np.pi * (1.0 - np.cos(self.theta0))
        return plus, self.manifold.area - plus

    def target_distance_xy(self, pts) -> np.ndarray:
        return np.abs(pts.ravel() - self.theta0)


class DiscCircle(Interface):
    """Concentric circle r = r0 in the unit disc; normal outward (plus side)."""

    def __init__(self, manifold: ModelManifold, r0: float = 0.5):
        if manifold.kind != "disc":
            raise ValueError("DiscCircle lives on the disc")
        self.manifold = manifold
        self.r0 = float(r0)
        self.m = manifold.shape[1]
        self.psi_size = self.m
        self.y = manifold.params["phi"].copy()

    def radius(self, psi) -> np.ndarray:
        return self.r0 + np.asarray(psi, dtype=float)

    def length(self, psi) -> float:
        rho = self.radius(psi)
        hphi = 2.0 * np.pi / self.m
        d1 = (np.roll(rho, -1) - np.roll(rho, 1)) / (2 * hphi)
        return float(np.sum(np.sqrt(rho**2 + d1**2)) * hphi)

    def jacobi_q(self) -> float:
        return 1.0 / self.r0**2

    def mode_kappa(self) -> np.ndarray:
        return np.arange(self.m // 2 + 1) / self.r0

    def node_weights(self) -> np.ndarray:
        return np.full(self.m, 2.0 * np.pi * self.r0 / self.m)

    def curvature(self, psi) -> np.ndarray:
        """H against the outward normal: -1/r for the round circle."""
        rho = self.radius(psi)
        hphi = 2.0 * np.pi / self.m
        d1 = (np.roll(rho, -1) - np.roll(rho, 1)) / (2 * hphi)
        d2 = (np.roll(rho, -1) - 2 * rho + np.roll(rho, 1)) / hphi**2
        kappa = (rho**2 + 2 * d1**2 - rho * d2) / (rho**2 + d1**2) ** 1.5
        return -kappa

    def parallel_curvature(self, t, y=None, comp=None):
        rho = self.r0 + float(np.mean(getattr(self, "_psi_cache", np.zeros(1))))
        return -1.0 / (rho + np.asarray(t))

    def chart(self, psi, tau0=None) -> FermiChart:
        nr, nphi = self.manifold.shape
        r = self.manifold.params["r"][:, None] + np.zeros((1, nphi))
        phi = self.manifold.params["phi"][None, :] + np.zeros((nr, 1))
        rho = self.radius(psi)
        tau0 = self._tau0() if tau0 is None else tau0
        if np.max(np.abs(np.asarray(psi))) > tau0 / 4.0 + 1e-12:
            raise TubeViolation("radial graph leaves a quarter of the tube")
        rho_g = np.interp(phi.ravel(), np.append(self.y, 2 * np.pi),
                          np.append(rho, rho[0])).reshape(nr, nphi)
        sign = np.where(r > rho_g, 1.0, -1.0)
        if np.max(np.abs(rho - rho[0])) < 1e-14:
            d = r - rho[0]
            foot = phi.copy()
        else:
            d, foot = self._dist_to_polar_graph(r, phi, rho)
            d = d * sign
        tube = np.abs(d) < tau0
        return FermiChart(interface=self, dist=d.ravel(),
                          sign=sign.ravel(),
                          foot=np.where(tube, foot, np.nan).ravel(),
                          component=np.where(tube, 0, -1).ravel(),
                          tube_mask=tube.ravel(), tau0=tau0)

    def _dist_to_polar_graph(self, r, phi, rho):
        cs = rfft(rho)
        k = np.arange(len(cs))

        def rho_eval(a, order=0):
            ph = np.exp(1j * np.outer(a, k))
            coef = cs * (1j * k) ** order
            vals = (ph @ coef).real * (2.0 / self.m)
            if order == 0:
                vals -= cs[0].real / self.m
            return vals

        a = phi.ravel().copy()
        pr = r.ravel()
        pphi = phi.ravel()
        for _ in range(10):
            ra = rho_eval(a)
            r1 = rho_eval(a, 1)
            # grad of 0.5|p - c(a)|^2 in polar form
            grad = ra * r1 - pr * (r1 * np.cos(a - pphi) - ra * np.sin(a - pphi))
            hess = (rho_eval(a, 2) * (ra - pr * np.cos(a - pphi))
                    + r1**2 + pr * (ra * np.cos(a - pphi) + 2 * r1 * np.sin(a - pphi)))
            hess = np.where(np.abs(hess) < 1e-3, 1e-3, hess)
            a = a - np.clip(grad / hess, -0.2, 0.2)
        ra = rho_eval(a)
        d = np.sqrt(pr**2 + ra**2 - 2 * pr * ra * np.cos(a - pphi))
        return d.reshape(r.shape), np.mod(a, 2 * np.pi).reshape(r.shape)

    def _tau0(self) -> float:
        Hmax = 1.0 / self.r0
        clearance = min(self.r0, 1.0 - self.r0)
        return min(0.4 / Hmax, 0.8 * clearance)

    def ray_index_coords(self, psi, t_nodes):
        hr = self.manifold.params["hr"]
        hphi = self.manifold.params["hphi"]
        rho = self.radius(psi)
        d1 = (np.roll(rho, -1) - np.roll(rho, 1)) / (2 * hphi)
        norm = np.sqrt(rho**2 + d1**2)
        # outward normal of the polar graph in the (r, phi) tangent frame
        cx = rho[:, None] * np.cos(self.y)[:, None] + np.outer(
            (rho * np.cos(self.y) + d1 * np.sin(self.y)) / norm, t_nodes)
        cy = rho[:, None] * np.sin(self.y)[:, None] + np.outer(
            (rho * np.sin(self.y) - d1 * np.cos(self.y)) / norm, t_nodes)
        rr = np.sqrt(cx**2 + cy**2)
        aa = np.mod(np.arctan2(cy, cx), 2 * np.pi)
        return [(rr / hr - 0.5, aa / hphi)]

    def symmetrize_psi(self, psi, names):
        out = np.array(psi, dtype=float)
        if "mirror_x" in names:
            out = 0.5 * (out + np.roll(out[::-1], 1))
        if "mirror_y" in names:
            half = np.roll(out[::-1], self.m // 2 + 1)
            out = 0.5 * (out + half)
        return out

    def allowed_modes(self, names):
        ks = np.arange(self.m // 2 + 1)
        keep = np.ones(len(ks), dtype=bool)
        if "mirror_y" in names:
            keep &= ks % 2 == 0
        return [("cos", float(k / self.r0), int(k)) for k in ks[keep]]

    def c0_target(self) -> float:
        return 1.0 - 2.0 * self.r0**2

    def enclosed_reference(self) -> tuple[float, float]:
        minus = np.pi * self.r0**2
        return self.manifold.area - minus, minus

    def target_distance_xy(self, pts) -> np.ndarray:
        return np.abs(np.hypot(pts[:, 0], pts[:, 1]) - self.r0)


class DiscChord(Interface):
    """Diameter chord of the disc; Jacobi assembly only (Robin boundary rule)."""

    def __init__(self, manifold: ModelManifold):
        self.manifold = manifold
        self.m = manifold.shape[0]
        self.psi_size = self.m
        # parametrize by arclength across the diameter
        self.y = np.linspace(-1.0, 1.0, self.m)

    def length(self, psi) -> float:
        return 2.0

    def jacobi_q(self) -> float:
        return 0.0

    def boundary_coefficient(self) -> float:
        # A_{dM}(nu_N, nu_N) for the unit circle with inner normal: -1
        return -1.0


# ---------------------------------------------------------------------------
# Fermi-chart level operations


def signed_distance(manifold: ModelManifold, interface: Interface,
                    psi=None, tau0=None) -> FermiChart:
    psi = interface.psi_zero() if psi is None else np.asarray(psi, dtype=float)
    object.__setattr__(interface, "_psi_cache", psi)
    return interface.chart(psi, tau0=tau0)


def mean_curvature(manifold: ModelManifold, interface: Interface, t: float,
                   psi=None) -> np.ndarray:
    """Curvature of the parallel curve at signed offset t (one per node)."""
    psi = interface.psi_zero() if psi is None else np.asarray(psi, dtype=float)
    chart = signed_distance(manifold, interface, psi)
    if abs(t) >= chart.tau0:
        raise TubeViolation(f"|t| = {abs(t):.3f} is outside the tube {chart.tau0:.3f}")
    H0 = interface.curvature(psi)
    return H0 / (1.0 - t * H0) if manifold.kind != "sphere" else \
        np.atleast_1d(interface.parallel_curvature(t))


def enclosed_volumes(manifold: ModelManifold, chart: FermiChart) -> tuple[float, float]:
    plus = float(np.sum(manifold.weights[chart.dist > 0]))
    minus = float(np.sum(manifold.weights[chart.dist < 0]))
    return plus, minus


# ---------------------------------------------------------------------------
# Jacobi operator


@dataclass(frozen=True)
class JacobiAssembly:
    interface: Interface
    operator: np.ndarray       # dense FD matrix of Delta_N + q on the nodes
    q: float
    node_weights: np.ndarray
    boundary_rule: str = "none"

    def mode_eigenvalue(self, kappa: float) -> float:
        """Closed-form eigenvalue q - kappa^2 of the circle-mode."""
        return self.q - kappa**2

    def extended_matrix(self) -> np.ndarray:
        """Bordered operator (w, c) -> (L w + c, integral w)."""
        n = self.operator.shape[0]
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = self.operator
        out[:n, n] = 1.0
        out[n, :n] = self.node_weights
        return out


def jacobi_assemble(manifold: ModelManifold, interface: Interface) -> JacobiAssembly:
    q = interface.jacobi_q()
    if isinstance(interface, TorusPair):
        m = interface.m
        hy = interface.p1 / m
        lap = _circulant_second_difference(m, hy)
        block = lap + q * np.eye(m)
        op = np.block([[block, np.zeros((m, m))], [np.zeros((m, m)), block]])
        wts = interface.node_weights()
    elif isinstance(interface, SphereLatitude):
        m = interface.m
        hy = 2 * np.pi / m
        lap = _circulant_second_difference(m, hy) / np.sin(interface.theta0) ** 2
        op = lap + q * np.eye(m)
        wts = interface.node_weights()
    elif isinstance(interface, DiscCircle):
        m = interface.m
        hy = 2 * np.pi / m
        lap = _circulant_second_difference(m, hy) / interface.r0**2
        op = lap + q * np.eye(m)
        wts = interface.node_weights()
    elif isinstance(interface, DiscChord):
        m = interface.m
        hy = interface.y[1] - interface.y[0]
        op = _line_second_difference_robin(m, hy, interface.boundary_coefficient())
        wts = np.full(m, hy)
        return JacobiAssembly(interface=interface, operator=op, q=0.0,
                              node_weights=wts, boundary_rule="robin")
    else:
        raise ValueError("unsupported interface")
    return JacobiAssembly(interface=interface, operator=op, q=q, node_weights=wts)


def _circulant_second_difference(m: int, h: float) -> np.ndarray:
    main = np.full(m, -2.0)
    mat = np.diag(main) + np.diag(np.ones(m - 1), 1) + np.diag(np.ones(m - 1), -1)
    mat[0, -1] = mat[-1, 0] = 1.0
    return mat / h**2


def _line_second_difference_robin(m: int, h: float, robin: float) -> np.ndarray:
    """Second difference on a chord with d_nu w + robin*w = 0 at both ends.

    Ghost-node elimination with outward normal derivative; for robin = -1
    (the diameter in the unit disc) the rotation Jacobi field w = y is an
    exact discrete kernel element.
    """
    mat = (np.diag(np.full(m, -2.0)) + np.diag(np.ones(m - 1), 1)
           + np.diag(np.ones(m - 1), -1)) / h**2
    mat[0, 0] = (-2.0 - 2.0 * h * robin) / h**2
    mat[0, 1] = 2.0 / h**2
    mat[-1, -1] = (-2.0 - 2.0 * h * robin) / h**2
    mat[-1, -2] = 2.0 / h**2
    return mat


@dataclass(frozen=True)
class NondegeneracyVerdict:
    min_abs_eigenvalue: float
    nondegenerate: bool
    detail: str = ""


def nondegeneracy_check(J: JacobiAssembly, symmetry=()) -> NondegeneracyVerdict:
    """Smallest |eigenvalue| of the Jacobi operator on the symmetric class.

    Uses the closed-form circle-mode eigenvalues (the reference interfaces
    have constant coefficients, so Fourier modes diagonalize exactly).
    """
    interface = J.interface
    if isinstance(interface, DiscChord):
        vals = np.linalg.eigvals(J.operator)  # Robin rows are not symmetric
        m = float(np.min(np.abs(vals)))
        return NondegeneracyVerdict(m, m > 1e-6, "dense chord spectrum")
    modes = interface.allowed_modes(symmetry) if hasattr(interface, "allowed_modes") \
        else [("cos", float(k), i) for i, k in enumerate(interface.mode_kappa())]
    if not modes:
        return NondegeneracyVerdict(np.inf, True, "symmetry class is trivial")
    eigs = np.array([J.mode_eigenvalue(k) for (_, k, _) in modes])
    m = float(np.min(np.abs(eigs)))
    return NondegeneracyVerdict(m, m > 1e-6)


def volume_nondegeneracy_check(J: JacobiAssembly, symmetry=()) -> NondegeneracyVerdict:
    """Smallest singular value of the bordered operator on the symmetric class.

    The border couples only to the mean mode; degeneracy therefore occurs
    exactly when some nonzero allowed mode has Jacobi eigenvalue zero.
    """
    interface = J.interface
    modes = interface.allowed_modes(symmetry) if hasattr(interface, "allowed_modes") \
        else [("cos", 0.0, 0)]
    if not modes:
        return NondegeneracyVerdict(np.inf, True, "symmetry class is trivial")
    lenN = float(np.sum(J.node_weights))
    # bordered 2x2 block for the mean mode: [[q, 1], [|N|, 0]]
    block = np.array([[J.q, 1.0], [lenN, 0.0]])
    svals = [np.min(np.linalg.svd(block, compute_uv=False))]
    for (_, k, idx) in modes:
        if idx == 0:
            continue
        svals.append(abs(J.mode_eigenvalue(k)))
    m = float(np.min(svals))
    return NondegeneracyVerdict(m, m > 1e-6)


# ---------------------------------------------------------------------------
# interface smoothing


def smooth_interface(psi: np.ndarray, theta: float, period: float = 1.0) -> np.ndarray:
    """Spectral low-pass: pass below theta/2, cosine roll-off over one octave."""
    psi = np.asarray(psi, dtype=float)
    if psi.size <= 2 or theta <= 0:
        return psi.copy()
    coeffs = rfft(psi)
    kappa = 2.0 * np.pi * np.arange(len(coeffs)) / period
    mult = np.ones_like(kappa)
    ramp = (kappa > theta / 2.0) & (kappa < theta)
    mult[ramp] = np.cos(0.5 * np.pi * (kappa[ramp] - theta / 2.0) / (theta / 2.0)) ** 2
    mult[kappa >= theta] = 0.0
    return irfft(coeffs * mult, n=psi.size)


def smooth_torus_pair_psi(interface: TorusPair, psi: np.ndarray, theta: float) -> np.ndarray:
    pp, pm = interface.split(psi)
    return np.concatenate([smooth_interface(pp, theta, interface.p1),
                           smooth_interface(pm, theta, interface.p1)])


def smooth_psi(interface: Interface, psi: np.ndarray, theta: float) -> np.ndarray:
    if isinstance(interface, TorusPair):
        return smooth_torus_pair_psi(interface, psi, theta)
    if isinstance(interface, SphereLatitude):
        return np.array(psi, dtype=float)
    if isinstance(interface, DiscCircle):
        return smooth_interface(psi, theta, period=2.0 * np.pi * interface.r0)
    return np.array(psi, dtype=float)
