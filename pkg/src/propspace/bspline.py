"""Clamped B-spline curves evaluated with de Boor's algorithm.

Perturbation curves for the radial blade distributions are plain 1D
B-splines on clamped knot vectors.  Everything here is vectorized over the
evaluation parameter so a whole radial station set can be evaluated in one
call.
"""

from __future__ import annotations

import numpy as np


def clamped_uniform_knots(n_ctrl: int, degree: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Clamped knot vector with evenly spaced interior knots on [lo, hi]."""
    if n_ctrl <= degree:
        raise ValueError(f"need more than degree+1={degree + 1} control points, got {n_ctrl}")
    if not hi > lo:
        raise ValueError("knot range must be non-empty")
    n_interior = n_ctrl - degree - 1
    interior = lo + (hi - lo) * np.arange(1, n_interior + 1) / (n_interior + 1)
    return np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])


def find_span(knots: np.ndarray, degree: int, u) -> np.ndarray:
    """Index i such that knots[i] <= u < knots[i+1], clamped to the valid range."""
    n_ctrl = len(knots) - degree - 1
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, n_ctrl - 1)


def basis_matrix(knots: np.ndarray, degree: int, u) -> np.ndarray:
    """Dense matrix B with B[k, j] = N_j(u[k]), computed by the Cox-de Boor
    triangular scheme (only the degree+1 nonzero functions per row are filled)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_ctrl = len(knots) - degree - 1
    span = find_span(knots, degree, u)

    # triangular table of the nonzero basis values, vectorized over u
    vals = np.zeros((len(u), degree + 1))
    vals[:, 0] = 1.0
    left = np.empty((len(u), degree + 1))
    right = np.empty((len(u), degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        saved = np.zeros(len(u))
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.where(denom > 0.0, vals[:, r] / np.where(denom > 0.0, denom, 1.0), 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((len(u), n_ctrl))
    cols = span[:, None] - degree + np.arange(degree + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def evaluate(knots: np.ndarray, degree: int, coeffs: np.ndarray, u) -> np.ndarray:
    """Evaluate the spline sum_j coeffs[j] * N_j at parameter(s) u.

    coeffs may be (n_ctrl,) or (n_ctrl, k) for k curves sharing one knot
    vector; the result broadcasts accordingly.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != len(knots) - degree - 1:
        raise ValueError("coefficient count does not match knot vector")
    b = basis_matrix(knots, degree, u)
    return b @ coeffs


def greville_abscissae(knots: np.ndarray, degree: int) -> np.ndarray:
    """Greville points: running averages of degree consecutive interior knots."""
    n_ctrl = len(knots) - degree - 1
    return np.array([knots[i + 1 : i + degree + 1].mean() for i in range(n_ctrl)])
