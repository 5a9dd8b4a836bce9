"""Reduced one-dimensional forms for rotationally symmetric functions.

A function v(s) on the warped sphere has

    int |grad v|^2 dg = int v_s^2 rho ds,   rho = |S^{n-1}| phi^{n-1},

which is discretised with P1 elements on the meridian grid and the weight
integrated exactly for piecewise-linear phi.  Mass is lumped onto dual cells
[s_{i-1/2}, s_{i+1/2}], which keeps the pole nodes' weight positive.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from ricci_diameter.geometry import Profile, sphere_area


def _half_cell_integrals(profile: Profile) -> tuple[np.ndarray, np.ndarray]:
    """Integrals of rho over the left and right halves of every cell."""
    n = profile.n
    h = np.diff(profile.grid)
    a, b = profile.warp[:-1], profile.warp[1:]
    x, w = np.polynomial.legendre.leggauss(n // 2 + 2)
    # phi is linear on the cell; integrate phi^{n-1} over [0, 1/2] and [1/2, 1]
    lo = 0.25 * (x + 1.0)
    hi = 0.5 + lo
    def piece(u):
        return ((a[:, None] + (b - a)[:, None] * u[None, :]) ** (n - 1)) @ w * 0.25
    c = sphere_area(n - 1)
    return c * h * piece(lo), c * h * piece(hi)


def dual_weights(profile: Profile) -> np.ndarray:
    """Measure of the dual cell around each node (positive at the poles)."""
    left, right = _half_cell_integrals(profile)
    m = np.zeros(profile.m + 1)
    m[:-1] += left
    m[1:] += right
    return m


def conductances(profile: Profile) -> np.ndarray:
    """Edge weights c_e with int |grad v|^2 = sum_e c_e (v_{i+1} - v_i)^2."""
    left, right = _half_cell_integrals(profile)
    return (left + right) / np.diff(profile.grid) ** 2


def dirichlet_energy(profile: Profile, v: np.ndarray, c: np.ndarray | None = None) -> float:
    c = conductances(profile) if c is None else c
    return float(np.dot(c, np.diff(v) ** 2))


def stiffness_apply(c: np.ndarray, v: np.ndarray) -> np.ndarray:
    """K v for the tridiagonal stiffness with edge weights c."""
    flux = c * np.diff(v)
    out = np.zeros_like(v)
    out[:-1] -= flux
    out[1:] += flux
    return out


def banded(c: np.ndarray, diag: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """(scale * K + diag(diag)) in the (1, 1) banded layout of solve_banded."""
    ab = np.zeros((3, diag.size))
    main = diag.astype(float).copy()
    main[:-1] += scale * c
    main[1:] += scale * c
    ab[0, 1:] = -scale * c
    ab[1] = main
    ab[2, :-1] = -scale * c
    return ab


def solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return solve_banded((1, 1), ab, rhs, check_finite=False)
