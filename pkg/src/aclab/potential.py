"""Double-well potentials, their validation, and well constants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateWells, NondegenerateWellViolation

# sampling used by the positivity surrogate check
_POSITIVITY_SAMPLES = 1000
_WELL_TOL = 1e-12


@dataclass(frozen=True)
class DoubleWell:
    """Smooth potential vanishing exactly at two nondegenerate minima.

    The callables must accept scalars and numpy arrays.  Well locations are
    declared by the caller and validated, never root-found.
    """

    eval_W: Callable[[np.ndarray], np.ndarray]
    eval_dW: Callable[[np.ndarray], np.ndarray]
    eval_ddW: Callable[[np.ndarray], np.ndarray]
    wells: tuple[float, float]
    name: str = "custom"
    # affine map recorded by normalize_wells: canonical u maps to a*u + b
    affine: tuple[float, float] = (1.0, 0.0)

    @property
    def is_standard_quartic(self) -> bool:
        return self.name == "quartic"

    def W(self, u):
        return self.eval_W(np.asarray(u, dtype=float))

    def dW(self, u):
        return self.eval_dW(np.asarray(u, dtype=float))

    def ddW(self, u):
        return self.eval_ddW(np.asarray(u, dtype=float))


def validate_well(well: DoubleWell) -> DoubleWell:
    """Check the defining properties of a double well.

    Raises DegenerateWells or NondegenerateWellViolation; the global
    positivity requirement is checked by dense sampling between and slightly
    beyond the wells (excluding small neighborhoods of the wells themselves).
    """
    um, up = well.wells
    if not um < up:
        raise DegenerateWells(f"wells must satisfy u- < u+, got {well.wells}")
    for u0 in (um, up):
        if abs(float(well.W(u0))) > _WELL_TOL:
            raise NondegenerateWellViolation(
                f"W({u0}) = {float(well.W(u0)):.3e} is not zero"
            )
        if float(well.ddW(u0)) <= 0.0:
            raise NondegenerateWellViolation(
                f"W''({u0}) = {float(well.ddW(u0)):.3e} is not positive"
            )
    span = up - um
    lo, hi = um - 0.25 * span, up + 0.25 * span
    u = np.linspace(lo, hi, _POSITIVITY_SAMPLES)
    mask = (np.abs(u - um) > 1e-3 * span) & (np.abs(u - up) > 1e-3 * span)
    vals = well.W(u[mask])
    if np.any(vals <= 0.0):
        bad = u[mask][np.argmin(vals)]
        raise NondegenerateWellViolation(
            f"W is not positive away from the wells (W({bad:.4f}) = {vals.min():.3e})"
        )
    return well


def make_standard_well() -> DoubleWell:
    """The model quartic W(u) = (1 - u^2)^2 with wells at -1, +1."""
    well = DoubleWell(
        eval_W=lambda u: (1.0 - u * u) ** 2,
        eval_dW=lambda u: -4.0 * u * (1.0 - u * u),
        eval_ddW=lambda u: 12.0 * u * u - 4.0,
        wells=(-1.0, 1.0),
        name="quartic",
    )
    return validate_well(well)


def make_polynomial_well(coeffs, wells) -> DoubleWell:
    """Double well from polynomial coefficients (lowest degree first).

    The declared wells are deflated by polynomial division and the potential
    is evaluated in the factored form r(u)^2 q(u), r = (u - u-)(u - u+).
    Expanded coefficient sums lose all significant digits within ~1e-8 of a
    double root, which the tail quadrature visits.
    """
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    um, up = float(wells[0]), float(wells[1])
    r = np.polynomial.Polynomial.fromroots([um, up])
    q, rem = divmod(P, r * r)
    scale = np.max(np.abs(P.coef)) if len(P.coef) else 1.0
    if np.max(np.abs(rem.coef)) > 1e-9 * scale:
        # wells are not (numerically) double roots; fall back to plain form
        dp, ddp = P.deriv(), P.deriv(2)
        well = DoubleWell(
            eval_W=lambda u: P(u),
            eval_dW=lambda u: dp(u),
            eval_ddW=lambda u: ddp(u),
            wells=(um, up),
            name="polynomial",
        )
        return validate_well(well)

    dq, ddq = q.deriv(), q.deriv(2)

    def _r(u):
        return (u - um) * (u - up)

    def _dr(u):
        return 2.0 * u - um - up

    def W(u):
        return _r(u) ** 2 * q(u)

    def dW(u):
        return 2.0 * _r(u) * _dr(u) * q(u) + _r(u) ** 2 * dq(u)

    def ddW(u):
        rr, dr = _r(u), _dr(u)
        return (2.0 * dr**2 + 4.0 * rr) * q(u) + 4.0 * rr * dr * dq(u) + rr**2 * ddq(u)

    well = DoubleWell(eval_W=W, eval_dW=dW, eval_ddW=ddW, wells=(um, up), name="polynomial")
    return validate_well(well)


def scale_well(well: DoubleWell, factor: float) -> DoubleWell:
    """Multiply a validated well by a positive constant."""
    if factor <= 0:
        raise NondegenerateWellViolation("scale factor must be positive")
    scaled = DoubleWell(
        eval_W=lambda u: factor * well.eval_W(u),
        eval_dW=lambda u: factor * well.eval_dW(u),
        eval_ddW=lambda u: factor * well.eval_ddW(u),
        wells=well.wells,
        name=f"{well.name}*{factor:g}",
        affine=well.affine,
    )
    return validate_well(scaled)


def normalize_wells(raw: DoubleWell) -> DoubleWell:
    """Affine change of variable putting the wells at exactly -1 and +1.

    The canonical potential is u -> W(a*u + b) with a = (u+ - u-)/2 and
    b = (u+ + u-)/2; (a, b) are recorded on the result.  Idempotent on
    already-canonical wells.
    """
    um, up = raw.wells
    if um == up:
        raise DegenerateWells("wells coincide")
    a = (up - um) / 2.0
    b = (up + um) / 2.0
    if a == 1.0 and b == 0.0:
        return raw
    W, dW, ddW = raw.eval_W, raw.eval_dW, raw.eval_ddW
    canon = DoubleWell(
        eval_W=lambda u: W(a * u + b),
        eval_dW=lambda u: a * dW(a * u + b),
        eval_ddW=lambda u: a * a * ddW(a * u + b),
        wells=(-1.0, 1.0),
        name=f"{raw.name}-normalized",
        affine=(a, b),
    )
    return validate_well(canon)


@dataclass(frozen=True)
class IndicialData:
    """Exponential decay rates of the profile toward its two limits."""

    gamma_minus: float
    gamma_plus: float

    @property
    def gamma_min(self) -> float:
        return min(self.gamma_minus, self.gamma_plus)

    def rate(self, zeta: float) -> tuple[float, float]:
        """Decay rates of the shifted layer operator, sqrt(zeta + gamma^2)."""
        return (
            float(np.sqrt(zeta + self.gamma_minus**2)),
            float(np.sqrt(zeta + self.gamma_plus**2)),
        )


def indicial_roots(well: DoubleWell) -> IndicialData:
    """gamma_pm = sqrt(W''(+-1)/2) for a validated canonical well."""
    if well.wells != (-1.0, 1.0):
        well = normalize_wells(well)
    out = []
    for u0 in (-1.0, 1.0):
        dd = float(well.ddW(u0))
        if dd <= 0.0:
            raise NondegenerateWellViolation(f"W''({u0}) = {dd:.3e} <= 0")
        out.append(np.sqrt(0.5 * dd))
    return IndicialData(gamma_minus=float(out[0]), gamma_plus=float(out[1]))


def well_from_config(spec) -> DoubleWell:
    """Resolve the CLI/config well selector.

    Accepts the string "quartic" or a mapping
    {kind = "custom", coeffs = [...], wells = [u-, u+]}.
    """
    if spec == "quartic":
        return make_standard_well()
    if isinstance(spec, dict) and spec.get("kind") == "custom":
        well = make_polynomial_well(spec["coeffs"], spec["wells"])
        return normalize_wells(well)
    raise ValueError(f"unknown well selector: {spec!r}")
