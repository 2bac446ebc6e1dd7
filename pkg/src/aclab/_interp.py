"""Local cubic (Catmull-Rom) interpolation on structured grids.

Both the fiber quadrature and its adjoint columns need the *same* linear
interpolation rule, available either as evaluated values or as explicit
sparse weight rows; scipy's spline evaluators do not expose their weights,
so a compact convolutional kernel is implemented here.
"""

from __future__ import annotations

import numpy as np


def _kernel(s: np.ndarray) -> np.ndarray:
    """Catmull-Rom weights for the 4-point stencil at fraction s in [0,1)."""
    s2 = s * s
    s3 = s2 * s
    w0 = 0.5 * (-s3 + 2.0 * s2 - s)
    w1 = 0.5 * (3.0 * s3 - 5.0 * s2 + 2.0)
    w2 = 0.5 * (-3.0 * s3 + 4.0 * s2 + s)
    w3 = 0.5 * (s3 - s2)
    return np.stack([w0, w1, w2, w3], axis=-1)


def _stencil(idx: np.ndarray, n: int, periodic: bool):
    base = np.floor(idx).astype(int)
    s = idx - base
    cols = base[:, None] + np.arange(-1, 3)[None, :]
    if periodic:
        cols = np.mod(cols, n)
    else:
        cols = np.clip(cols, 0, n - 1)
    return cols, _kernel(s)


def interp1(values: np.ndarray, idx: np.ndarray, periodic: bool) -> np.ndarray:
    cols, w = _stencil(np.asarray(idx, dtype=float), len(values), periodic)
    return np.sum(values[cols] * w, axis=1)


def interp2(field: np.ndarray, idx0: np.ndarray, idx1: np.ndarray,
            periodic: tuple[bool, bool]) -> np.ndarray:
    """Bicubic interpolation of field[n0, n1] at fractional indices."""
    n0, n1 = field.shape
    c0, w0 = _stencil(np.asarray(idx0, dtype=float), n0, periodic[0])
    c1, w1 = _stencil(np.asarray(idx1, dtype=float), n1, periodic[1])
    # gather the 4x4 stencils: (npts, 4, 4)
    vals = field[c0[:, :, None], c1[:, None, :]]
    return np.einsum("pij,pi,pj->p", vals, w0, w1)


def interp2_rows(shape: tuple[int, int], idx0: np.ndarray, idx1: np.ndarray,
                 periodic: tuple[bool, bool]):
    """Sparse rows (cols, weights) of the bicubic evaluation, 16 per point."""
    n0, n1 = shape
    c0, w0 = _stencil(np.asarray(idx0, dtype=float), n0, periodic[0])
    c1, w1 = _stencil(np.asarray(idx1, dtype=float), n1, periodic[1])
    cols = (c0[:, :, None] * n1 + c1[:, None, :]).reshape(len(idx0), 16)
    weights = (w0[:, :, None] * w1[:, None, :]).reshape(len(idx0), 16)
    return cols, weights


def interp1_rows(n: int, idx: np.ndarray, periodic: bool):
    """Sparse rows (cols, weights) of the 1d cubic evaluation, 4 per point."""
    cols, w = _stencil(np.asarray(idx, dtype=float), n, periodic)
    return cols, w
