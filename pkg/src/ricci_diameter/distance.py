"""Geodesic distances on warped-product spheres via fast marching.

For a centre on the meridian, distances in ds^2 + phi(s)^2 g_{S^{n-1}} depend
only on (s, alpha), alpha being the angle on S^{n-1} from the centre's
direction, and equal distances on the surface of revolution ds^2 + phi^2 dalpha^2
with alpha in [0, pi] (reflecting at both ends).  The two pole rows each
collapse to a single node.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from ricci_diameter.flow import reparametrize_arclength
from ricci_diameter.geometry import (
    Profile,
    measure_density,
    scalar_curvature,
    sphere_area,
    volume,
)

DEFAULT_N_S = 256
DEFAULT_N_ALPHA = 256
DEFAULT_SUBSAMPLE = 4
INIT_CELLS = 8.0


class DistanceError(RuntimeError):
    pass


@numba.njit(cache=True)
def _tri_update(ta, ax, ay, tb, bx, by):
    """Plane-wave update of the origin from known values at offsets a and b.

    Returns inf when the characteristic does not enter through the triangle.
    """
    det = ax * by - ay * bx
    if abs(det) < 1e-300:
        return np.inf
    # Q = (P P^T)^{-1} with P = [[ax, ay], [bx, by]]
    p11 = ax * ax + ay * ay
    p12 = ax * bx + ay * by
    p22 = bx * bx + by * by
    dd = p11 * p22 - p12 * p12
    q11, q12, q22 = p22 / dd, -p12 / dd, p11 / dd
    # (u - T 1)^T Q (u - T 1) = 1 with u = (ta, tb)
    s1 = q11 + 2.0 * q12 + q22
    s2 = q11 * ta + q12 * (ta + tb) + q22 * tb
    s3 = q11 * ta * ta + 2.0 * q12 * ta * tb + q22 * tb * tb - 1.0
    disc = s2 * s2 - s1 * s3
    if disc < 0.0:
        return np.inf
    T = (s2 + math.sqrt(disc)) / s1
    if T < max(ta, tb):
        return np.inf
    # gradient g solves P g = u - T; require -g = P^T lam with lam >= 0
    u1, u2 = ta - T, tb - T
    gx = (by * u1 - ay * u2) / det
    gy = (-bx * u1 + ax * u2) / det
    l1 = -(by * gx - bx * gy) / det
    l2 = -(-ay * gx + ax * gy) / det
    if l1 < -1e-12 or l2 < -1e-12:
        return np.inf
    return T


@numba.njit(cache=True)
def _update(d, known, s, phi, dalpha, i, j, M, Na):
    if i == 1 or i == M - 1:
        return _update_axial(d, known, s, phi, dalpha, i, j, M, Na)
    # eight neighbours in counter-clockwise order; local Euclidean offsets
    best = np.inf
    di = (1, 1, 0, -1, -1, -1, 0, 1)
    dj = (0, 1, 1, 1, 0, -1, -1, -1)
    vals = np.empty(8)
    xs = np.empty(8)
    ys = np.empty(8)
    for k in range(8):
        ni = i + di[k]
        nj = j + dj[k]
        if nj < 0:
            nj = -nj
        elif nj > Na:
            nj = 2 * Na - nj
        xs[k] = s[ni] - s[i]
        ys[k] = 0.5 * (phi[i] + phi[ni]) * dalpha * dj[k]
        vals[k] = d[ni, nj] if known[ni, nj] else np.inf
        if vals[k] < np.inf:
            t = vals[k] + math.hypot(xs[k], ys[k])
            if t < best:
                best = t
    for k in range(8):
        k2 = (k + 1) % 8
        if vals[k] < np.inf and vals[k2] < np.inf:
            t = _tri_update(vals[k], xs[k], ys[k], vals[k2], xs[k2], ys[k2])
            if t < best:
                best = t
    return best


@numba.njit(cache=True)
def _update_axial(d, known, s, phi, dalpha, i, j, M, Na):
    """Four-neighbour update, used on the rows adjacent to a pole."""
    a, ha = np.inf, 1.0
    if i == 1 and known[0, 0]:
        a, ha = d[0, 0], s[1] - s[0]
    if i == M - 1 and known[M, 0]:
        a, ha = d[M, 0], s[M] - s[M - 1]
    if i > 1 and known[i - 1, j] and d[i - 1, j] < a:
        a, ha = d[i - 1, j], s[i] - s[i - 1]
    if i < M - 1 and known[i + 1, j] and d[i + 1, j] < a:
        a, ha = d[i + 1, j], s[i + 1] - s[i]
    # alpha-direction (mirror at both ends)
    hb = phi[i] * dalpha
    b = np.inf
    jl = j - 1 if j > 0 else 1
    jr = j + 1 if j < Na else Na - 1
    if known[i, jl] and d[i, jl] < b:
        b = d[i, jl]
    if known[i, jr] and d[i, jr] < b:
        b = d[i, jr]
    if a == np.inf and b == np.inf:
        return np.inf
    if b == np.inf:
        return a + ha
    if a == np.inf:
        return b + hb
    # solve ((T-a)/ha)^2 + ((T-b)/hb)^2 = 1, upwind-consistent root
    t1 = a + ha
    t2 = b + hb
    tmin = min(t1, t2)
    if abs(a - b) >= math.hypot(ha, hb) * 0.999999:
        return tmin
    wa = 1.0 / (ha * ha)
    wb = 1.0 / (hb * hb)
    A = wa + wb
    B = -2.0 * (a * wa + b * wb)
    C = a * a * wa + b * b * wb - 1.0
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        return tmin
    T = (-B + math.sqrt(disc)) / (2.0 * A)
    if T < max(a, b):
        return tmin
    return min(T, tmin)


@numba.njit(cache=True)
def _fast_march(s, phi, dalpha, Na, i0, init_d, init_mask):
    M = s.size - 1
    d = np.full((M + 1, Na + 1), np.inf)
    known = np.zeros((M + 1, Na + 1), dtype=np.bool_)
    fixed = init_mask.copy()
    heap = [(0.0, 0, 0)]
    heap.pop()
    for i in range(M + 1):
        for j in range(Na + 1):
            if init_mask[i, j]:
                d[i, j] = init_d[i, j]
                heapq.heappush(heap, (init_d[i, j], i, j))
    last = 0.0
    while len(heap) > 0:
        val, i, j = heapq.heappop(heap)
        if known[i, j] or val > d[i, j]:
            continue
        if val < last - 1e-9 * (1.0 + last):
            return d, i, j
        last = val
        if i == 0 or i == M:
            for jj in range(Na + 1):
                known[i, jj] = True
                d[i, jj] = val
            nb_i = 1 if i == 0 else M - 1
            for jj in range(Na + 1):
                if not known[nb_i, jj] and not fixed[nb_i, jj]:
                    t = _update(d, known, s, phi, dalpha, nb_i, jj, M, Na)
                    if t < d[nb_i, jj]:
                        d[nb_i, jj] = t
                        heapq.heappush(heap, (t, nb_i, jj))
            continue
        known[i, j] = True
        # neighbours
        for k in range(4):
            if k == 0:
                ni, nj = i - 1, j
            elif k == 1:
                ni, nj = i + 1, j
            elif k == 2:
                ni, nj = i, j - 1
            else:
                ni, nj = i, j + 1
            if nj < 0 or nj > Na:
                continue
            if ni == 0 or ni == M:
                if not known[ni, 0] and not fixed[ni, 0]:
                    t = val + (s[i] - s[ni] if ni == 0 else s[ni] - s[i])
                    if t < d[ni, 0]:
                        for jj in range(Na + 1):
                            d[ni, jj] = t
                        heapq.heappush(heap, (t, ni, 0))
                continue
            if known[ni, nj] or fixed[ni, nj]:
                continue
            t = _update(d, known, s, phi, dalpha, ni, nj, M, Na)
            if t < d[ni, nj]:
                d[ni, nj] = t
                heapq.heappush(heap, (t, ni, nj))
    return d, -1, -1


def _distance_grid(profile: Profile, n_s: int | None) -> Profile:
    if n_s is not None and profile.m > n_s:
        return reparametrize_arclength(profile, n_s)
    return profile


@dataclass(frozen=True)
class DistanceField:
    """Distances d(centre, (s_i, alpha_j)) on the reduced surface."""

    profile: Profile
    center_index: int
    alpha: np.ndarray
    dist: np.ndarray
    subsample: int = DEFAULT_SUBSAMPLE

    @property
    def center_s(self) -> float:
        return float(self.profile.grid[self.center_index])

    @property
    def n(self) -> int:
        return self.profile.n

    def at(self, s: np.ndarray | float, alpha: np.ndarray | float) -> np.ndarray:
        """Bilinear interpolation of the distance at arbitrary (s, alpha)."""
        return _bilinear(self.profile.grid, self.alpha, self.dist, np.asarray(s, float), np.asarray(alpha, float))

    @cached_property
    def _samples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Sub-cell samples sorted by distance: (d, volume weight, R_+ weight, R)."""
        q = self.subsample
        p = self.profile
        s, phi, n = p.grid, p.warp, p.n
        frac = (np.arange(q) + 0.5) / q
        ss = (s[:-1, None] + np.diff(s)[:, None] * frac[None, :]).ravel()
        phi_ss = np.interp(ss, s, phi)
        dens = sphere_area(n - 1) * phi_ss ** (n - 1)
        # normalise each s-cell so its total matches the trapezoid weight
        f = measure_density(p)
        trap = 0.5 * (f[:-1] + f[1:]) * np.diff(s)
        mid = dens.reshape(-1, q).sum(axis=1) * np.diff(s) / q
        scale = np.divide(trap, mid, out=np.ones_like(trap), where=mid > 0)
        ws = (dens.reshape(-1, q) * (np.diff(s) / q)[:, None] * scale[:, None]).ravel()

        a = self.alpha
        edges = (a[:-1, None] + np.diff(a)[:, None] * (np.arange(q + 1) / q)[None, :])
        wa = _sin_power_integral(edges, n - 2)
        wa = wa * (sphere_area(n - 2) / sphere_area(n - 1))
        aa = (a[:-1, None] + np.diff(a)[:, None] * frac[None, :]).ravel()

        d = _bilinear(s, a, self.dist, ss[:, None], aa[None, :])
        w = ws[:, None] * wa.ravel()[None, :]
        R = np.interp(ss, s, scalar_curvature(p))
        Rp = np.maximum(R, 0.0)
        order = np.argsort(d, axis=None, kind="stable")
        d = d.ravel()[order]
        w = w.ravel()[order]
        Rs = np.broadcast_to(R[:, None], (ss.size, aa.size)).ravel()[order]
        return d, w, w * np.maximum(Rs, 0.0), Rs

    @cached_property
    def _cumulative(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d, w, wr, _ = self._samples
        return d, np.concatenate([[0.0], np.cumsum(w)]), np.concatenate([[0.0], np.cumsum(wr)])

    def release_cache(self) -> None:
        """Drop the sorted sub-cell samples; they are rebuilt on demand."""
        self.__dict__.pop("_samples", None)
        self.__dict__.pop("_cumulative", None)

    @property
    def max_dist(self) -> float:
        return float(self.dist.max())

    def ball_volume(self, r: float | np.ndarray) -> np.ndarray | float:
        d, cw, _ = self._cumulative
        r_arr = np.asarray(r, float)
        if np.any(r_arr <= 0):
            raise ValueError("radius must be positive")
        out = cw[np.searchsorted(d, r_arr, side="right")]
        out = np.where(r_arr >= self.max_dist, volume(self.profile), out)
        return float(out) if out.ndim == 0 else out

    def ball_covers_manifold(self, r: float) -> bool:
        return r >= self.max_dist

    def curvature_in_ball(self, r: float | np.ndarray) -> np.ndarray | float:
        """Integral of R_+ over B(centre, r)."""
        d, _, cr = self._cumulative
        out = cr[np.searchsorted(d, np.asarray(r, float), side="right")]
        return float(out) if np.ndim(out) == 0 else out

    def integrate_radial(self, f) -> float:
        """Integral over M of f(d) dg, f vectorised over distances."""
        d, w, _, _ = self._samples
        return float(np.dot(w, f(d)))

    def integrate_radial_R(self, f) -> float:
        """Integral over M of R * f(d) dg."""
        d, w, _, R = self._samples
        return float(np.dot(w * R, f(d)))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s", "alpha", "dist"])
            for i, s in enumerate(self.profile.grid):
                for j, a in enumerate(self.alpha):
                    writer.writerow([repr(float(s)), repr(float(a)), repr(float(self.dist[i, j]))])


def _sin_power_integral(edges: np.ndarray, k: int) -> np.ndarray:
    """Integral of sin^k over consecutive intervals along the last axis of edges."""
    x = edges
    if k == 0:
        F = x
    elif k == 1:
        F = -np.cos(x)
    elif k == 2:
        F = 0.5 * x - 0.25 * np.sin(2 * x)
    else:
        # fine composite Simpson per sub-interval
        lo, hi = x[..., :-1], x[..., 1:]
        t = np.linspace(0.0, 1.0, 9)
        pts = lo[..., None] + (hi - lo)[..., None] * t
        vals = np.sin(pts) ** k
        wts = np.array([1, 4, 2, 4, 2, 4, 2, 4, 1]) / 24.0
        return (vals * wts).sum(axis=-1) * (hi - lo)
    return np.diff(F, axis=-1)


def _bilinear(s, a, dist, qs, qa):
    qs, qa = np.broadcast_arrays(qs, qa)
    i = np.clip(np.searchsorted(s, qs, side="right") - 1, 0, s.size - 2)
    j = np.clip(np.searchsorted(a, qa, side="right") - 1, 0, a.size - 2)
    ts = (qs - s[i]) / (s[i + 1] - s[i])
    ta = (qa - a[j]) / (a[j + 1] - a[j])
    d00 = dist[i, j]
    d10 = dist[i + 1, j]
    d01 = dist[i, j + 1]
    d11 = dist[i + 1, j + 1]
    return (1 - ts) * ((1 - ta) * d00 + ta * d01) + ts * ((1 - ta) * d10 + ta * d11)


def solve_distance(
    profile: Profile,
    center_s: float,
    n_alpha: int = DEFAULT_N_ALPHA,
    n_s: int | None = DEFAULT_N_S,
    subsample: int = DEFAULT_SUBSAMPLE,
) -> DistanceField:
    """First-order fast marching from the grid node nearest to (center_s, alpha=0)."""
    if not 0.0 <= center_s <= profile.length:
        raise ValueError(f"center_s={center_s} outside [0, {profile.length}]")
    grid_profile = _distance_grid(profile, n_s)
    s, phi = grid_profile.grid, grid_profile.warp
    i0 = int(np.argmin(np.abs(s - center_s * grid_profile.length / profile.length)))
    alpha = np.linspace(0.0, math.pi, n_alpha + 1)
    dalpha = math.pi / n_alpha

    # local initialisation: d^2 ~ ds^2 + 4 phi(s) phi(s0) sin^2(alpha/2)
    h = INIT_CELLS * float(np.diff(s).max())
    S, A = np.meshgrid(s, alpha, indexing="ij")
    init = np.sqrt((S - s[i0]) ** 2 + 4.0 * phi[:, None] * phi[i0] * np.sin(A / 2) ** 2)
    mask = init <= h
    if i0 in (0, s.size - 1):
        init = np.abs(S - s[i0])
        mask = init <= h
    d, bi, bj = _fast_march(s, phi, dalpha, n_alpha, i0, init, mask)
    if bi >= 0:
        raise DistanceError(f"non-monotone fast-marching update at node (s={s[bi]:.6g}, alpha={alpha[bj]:.6g})")
    if not np.all(np.isfinite(d)):
        bad = np.argwhere(~np.isfinite(d))[0]
        raise DistanceError(f"unreached node at (s={s[bad[0]]:.6g}, alpha={alpha[bad[1]]:.6g})")
    return DistanceField(grid_profile, i0, alpha, d, subsample)


def ball_volume(profile: Profile, field: DistanceField, r: float) -> float:
    return field.ball_volume(r)


def volume_ratio_kappa(profile: Profile, field: DistanceField, r: float) -> float:
    """kappa(x, r) = |B(x, r)| / r^n."""
    return field.ball_volume(r) / r**profile.n


def m2_radii(field: DistanceField, r: float, samples: int = 32) -> np.ndarray:
    """Log-spaced radii from one grid cell up to r, with r itself included."""
    h = float(np.diff(field.profile.grid).min())
    lo = min(h, r)
    return np.unique(np.append(np.geomspace(lo, r, samples), r))


def maximal_M2(profile: Profile, field: DistanceField, r: float, samples: int = 32) -> float:
    """sup over rho in (0, r] of rho^2 times the average of R_+ over B(x, rho)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    rho = m2_radii(field, r, samples)
    vol = field.ball_volume(rho)
    curv = field.curvature_in_ball(rho)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(vol > 0, rho**2 * curv / vol, 0.0)
    return float(vals.max())


@dataclass(frozen=True)
class DiameterResult:
    diameter: float
    center_s: float
    far_s: float
    far_alpha: float


def diameter_centers(profile: Profile, meridian_samples: int = 16) -> np.ndarray:
    L = profile.length
    inner = np.linspace(0.0, L, meridian_samples + 2)[1:-1]
    return np.concatenate([[0.0, L], inner])


def diameter(
    profile: Profile,
    meridian_samples: int = 16,
    n_alpha: int = 64,
    n_s: int | None = DEFAULT_N_S,
) -> DiameterResult:
    """Max over sampled centres (both poles and meridian points) of the max distance."""
    best = None
    for c in diameter_centers(profile, meridian_samples):
        f = solve_distance(profile, c, n_alpha=n_alpha, n_s=n_s)
        flat = int(np.argmax(f.dist))  # first maximum in (s-index, alpha-index) order
        i, j = divmod(flat, f.dist.shape[1])
        val = float(f.dist[i, j])
        key = (-val, f.center_index, i, j)
        if best is None or key < best[0]:
            best = (key, DiameterResult(val, f.center_s, float(f.profile.grid[i]), float(f.alpha[j])))
    return best[1]
