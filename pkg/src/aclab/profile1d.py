"""Heteroclinic layer profile by quadrature inversion.

The monotone connection between the two wells is recovered from its implicit
integral representation t(u) = integral_0^u dx / sqrt(W(x)).  The integrand
has simple poles in 1/(1 -+ x) at the wells; these are split off analytically
and only the smooth remainder is integrated numerically, which keeps the
inversion stable arbitrarily far into the tails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, simpson
from scipy.interpolate import CubicSpline

from .errors import FitFailure, QuadratureFailure
from .potential import DoubleWell, IndicialData, indicial_roots, validate_well

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class Profile:
    """Tabulated heteroclinic u* with w* = du*/dt and derived constants."""

    grid_t: np.ndarray
    u_values: np.ndarray
    w_values: np.ndarray
    c_star: float
    indicial: IndicialData
    A_minus: float
    A_plus: float
    well: DoubleWell
    _u_spline: CubicSpline
    _w_spline: CubicSpline

    @property
    def T_max(self) -> float:
        return float(self.grid_t[-1])

    @property
    def is_standard_quartic(self) -> bool:
        return self.well.is_standard_quartic

    def u(self, t):
        """Profile value, exponential-tail extension beyond the grid."""
        t = np.asarray(t, dtype=float)
        gm, gp = self.indicial.gamma_minus, self.indicial.gamma_plus
        out = self._u_spline(np.clip(t, -self.T_max, self.T_max))
        out = np.where(t > self.T_max, 1.0 - self.A_plus * np.exp(-gp * t), out)
        out = np.where(t < -self.T_max, -1.0 + self.A_minus * np.exp(gm * t), out)
        return out if out.ndim else float(out)

    def w(self, t):
        """Profile derivative, exponential-tail extension beyond the grid."""
        t = np.asarray(t, dtype=float)
        gm, gp = self.indicial.gamma_minus, self.indicial.gamma_plus
        out = self._w_spline(np.clip(t, -self.T_max, self.T_max))
        out = np.where(t > self.T_max, self.A_plus * gp * np.exp(-gp * t), out)
        out = np.where(t < -self.T_max, self.A_minus * gm * np.exp(gm * t), out)
        return out if out.ndim else float(out)

    def grid_integral_w2(self) -> float:
        """integral of w*^2 dt from the tabulated samples plus analytic tails."""
        gm, gp = self.indicial.gamma_minus, self.indicial.gamma_plus
        T = self.T_max
        core = float(simpson(self.w_values**2, x=self.grid_t))
        tail_p = self.A_plus**2 * gp / 2.0 * np.exp(-2.0 * gp * T)
        tail_m = self.A_minus**2 * gm / 2.0 * np.exp(-2.0 * gm * T)
        return core + tail_p + tail_m


def _smooth_remainder(well: DoubleWell, ind: IndicialData, x: np.ndarray) -> np.ndarray:
    """R(x) = 1/sqrt(W) - 1/(g+(1-x)) - 1/(g-(1+x)), evaluated stably.

    Near a well the pole term is recombined with 1/sqrt(W) through the ratio
    rho = W / (g^2 (1-+x)^2) -> 1 to avoid catastrophic cancellation.
    """
    gm, gp = ind.gamma_minus, ind.gamma_plus
    x = np.asarray(x, dtype=float)
    W = np.asarray(well.W(x), dtype=float)
    if np.any(W <= 0.0) or not np.all(np.isfinite(W)):
        raise QuadratureFailure("W is not positive inside the wells")
    out = np.empty_like(x)

    near_p = 1.0 - x < 0.5
    near_m = 1.0 + x < 0.5
    mid = ~(near_p | near_m)

    sqW = np.sqrt(W)
    if np.any(mid):
        out[mid] = 1.0 / sqW[mid] - 1.0 / (gp * (1.0 - x[mid])) - 1.0 / (gm * (1.0 + x[mid]))
    if np.any(near_p):
        om = 1.0 - x[near_p]
        rho = W[near_p] / (gp * om) ** 2
        sr = np.sqrt(rho)
        out[near_p] = (1.0 - rho) / ((1.0 + sr) * sr * gp * om) - 1.0 / (gm * (1.0 + x[near_p]))
    if np.any(near_m):
        om = 1.0 + x[near_m]
        rho = W[near_m] / (gm * om) ** 2
        sr = np.sqrt(rho)
        out[near_m] = (1.0 - rho) / ((1.0 + sr) * sr * gm * om) - 1.0 / (gp * (1.0 - x[near_m]))
    return out


def _pole_primitive(ind: IndicialData, u: np.ndarray) -> np.ndarray:
    """Closed-form primitive of the split-off pole terms, vanishing at 0."""
    gm, gp = ind.gamma_minus, ind.gamma_plus
    return -np.log1p(-u) / gp + np.log1p(u) / gm


def _gauss_panels(well, ind, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """12-point Gauss integral of the smooth remainder over panels [a, b]."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
    vals = _smooth_remainder(well, ind, nodes.ravel()).reshape(nodes.shape)
    return half * (vals @ _GAUSS_W)


def _build_u_mesh() -> np.ndarray:
    """Monotone u-mesh, uniform core plus geometric refinement into the tails."""
    core = np.linspace(0.0, 0.9, 181)
    tail = 1.0 - np.geomspace(0.1, 1e-14, 261)[1:]
    right = np.concatenate([core, tail])
    return np.concatenate([-right[::-1][:-1], right])


def compute_profile(well: DoubleWell, T_max: float | None = None, n_points: int = 8192) -> Profile:
    """Invert t(u) = integral_0^u dx/sqrt(W) on a uniform stretched grid.

    T_max defaults to 12 / min(gamma) so the standard tails sit below the
    interpolation error; n_points >= 2048 is required.
    """
    well = validate_well(well)
    ind = indicial_roots(well)
    if T_max is None:
        T_max = 12.0 / ind.gamma_min
    if T_max < 10.0 / ind.gamma_min - 1e-12:
        raise ValueError(f"T_max = {T_max} is below 10/min(gamma)")
    if n_points < 2048:
        raise ValueError("n_points must be at least 2048")

    u_mesh = _build_u_mesh()
    seg = _gauss_panels(well, ind, u_mesh[:-1], u_mesh[1:])
    i0 = np.searchsorted(u_mesh, 0.0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum_R = cum - cum[i0]
    t_mesh = _pole_primitive(ind, u_mesh) + cum_R
    if not np.all(np.isfinite(t_mesh)) or np.any(np.diff(t_mesh) <= 0):
        raise QuadratureFailure("profile time map is not finite and increasing")

    grid_t = np.linspace(-T_max, T_max, n_points)
    u = np.interp(grid_t, t_mesh, u_mesh)
    tiny = 1e-15
    for _ in range(6):
        u = np.clip(u, u_mesh[0] + tiny, u_mesh[-1] - tiny)
        k = np.clip(np.searchsorted(u_mesh, u) - 1, 0, len(u_mesh) - 2)
        t_of_u = t_mesh[k] + (_pole_primitive(ind, u) - _pole_primitive(ind, u_mesh[k]))
        t_of_u = t_of_u + _gauss_panels(well, ind, u_mesh[k], u)
        err = t_of_u - grid_t
        if np.max(np.abs(err)) < 1e-13:
            break
        u = u - err * np.sqrt(well.W(u))

    if np.any(np.diff(u) <= 0):
        raise QuadratureFailure("inverted profile is not strictly increasing")
    w = np.sqrt(well.W(u))

    gm, gp = ind.gamma_minus, ind.gamma_plus
    A_plus = float((1.0 - u[-1]) * np.exp(gp * T_max))
    A_minus = float((1.0 + u[0]) * np.exp(gm * T_max))

    c_star, c_err = quad(lambda s: np.sqrt(float(well.W(s))), -1.0, 1.0,
                         epsabs=1e-13, epsrel=1e-13, limit=200)
    if c_err > 1e-9:
        raise QuadratureFailure(f"interface constant quadrature error {c_err:.1e}")

    return Profile(
        grid_t=grid_t,
        u_values=u,
        w_values=w,
        c_star=float(c_star),
        indicial=ind,
        A_minus=A_minus,
        A_plus=A_plus,
        well=well,
        _u_spline=CubicSpline(grid_t, u),
        _w_spline=CubicSpline(grid_t, w),
    )


def eval_profile(p: Profile, t) -> tuple:
    """Interpolated (u, w) at arbitrary stretched times."""
    return p.u(t), p.w(t)


@dataclass(frozen=True)
class DecayReport:
    A_minus: float
    A_plus: float
    rate_minus: float
    rate_plus: float
    window: tuple


def decay_check(p: Profile, window: tuple | None = None, on_w: bool = False) -> DecayReport:
    """Least-squares exponential fit of the tails on [T/2, T] by default.

    Fits log|u -+ 1| (or log w for on_w=True) against t on each side and
    returns the fitted amplitudes and positive decay rates.
    """
    T = p.T_max
    lo, hi = window if window is not None else (T / 2.0, T)
    mask_p = (p.grid_t >= lo) & (p.grid_t <= hi)
    mask_m = (p.grid_t <= -lo) & (p.grid_t >= -hi)
    if on_w:
        vals_p = p.w_values[mask_p]
        vals_m = p.w_values[mask_m]
    else:
        vals_p = 1.0 - p.u_values[mask_p]
        vals_m = 1.0 + p.u_values[mask_m]
    if np.any(vals_p <= 0) or np.any(vals_m <= 0) or vals_p.min() < 1e-290:
        raise FitFailure("tail values vanished or underflowed; reduce T_max")
    slope_p, icept_p = np.polyfit(p.grid_t[mask_p], np.log(vals_p), 1)
    slope_m, icept_m = np.polyfit(p.grid_t[mask_m], np.log(vals_m), 1)
    return DecayReport(
        A_minus=float(np.exp(icept_m)),
        A_plus=float(np.exp(icept_p)),
        rate_minus=float(slope_m),
        rate_plus=float(-slope_p),
        window=(lo, hi),
    )
