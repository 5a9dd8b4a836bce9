"""Rotationally symmetric metrics ds^2 + phi(s)^2 g_{S^{n-1}} on the n-sphere.

A :class:`Profile` stores the warp function on a quasi-uniform arclength
grid.  Derivatives are taken in the node index (a uniform material
coordinate) and converted to arclength, with ghost nodes obtained from the
odd reflection of ``s`` and ``phi`` across both poles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gamma

TOL_POLE = 1e-3
MAX_SPACING_RATIO = 10.0
GHOST = 2


class ProfileError(ValueError):
    """Raised when a profile violates its invariants or yields non-finite curvature."""


def sphere_area(k: int) -> float:
    """Area of the unit k-sphere S^k in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def ball_volume_euclidean(n: int) -> float:
    """omega_n, the volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass(frozen=True)
class Profile:
    n: int
    grid: np.ndarray
    warp: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "warp", np.asarray(self.warp, dtype=float))
        if self.grid.shape != self.warp.shape or self.grid.ndim != 1:
            raise ProfileError("grid and warp must be 1-D arrays of equal length")

    @property
    def length(self) -> float:
        return float(self.grid[-1])

    @property
    def m(self) -> int:
        """Number of cells (nodes minus one)."""
        return self.grid.size - 1

    def scaled(self, lam: float) -> "Profile":
        """The metric lam^2 g, i.e. (L, phi) -> (lam L, lam phi)."""
        return Profile(self.n, lam * self.grid, lam * self.warp, lam * lam * self.time)

    def with_time(self, t: float) -> "Profile":
        return Profile(self.n, self.grid, self.warp, t)


@dataclass(frozen=True)
class GeometryReport:
    diameter: float
    volume: float
    curvature_integral: float
    sup_R: float
    sup_R_minus: float
    extra: dict = field(default_factory=dict)


# --- constructors -----------------------------------------------------------


def round_profile(n: int, radius: float = 1.0, m: int = 512, time: float = 0.0) -> Profile:
    s = np.linspace(0.0, math.pi * radius, m + 1)
    phi = radius * np.sin(s / radius)
    phi[0] = phi[-1] = 0.0
    return Profile(n, s, phi, time)


def _quintic_hermite(y0, d0, c0, y1, d1, c1, ell, u):
    """C^2 Hermite quintic on [0, ell] evaluated at offsets u."""
    x = u / ell
    h = [y0, d0 * ell, c0 * ell * ell, y1, d1 * ell, c1 * ell * ell]
    b0 = 1 - 10 * x**3 + 15 * x**4 - 6 * x**5
    b1 = x - 6 * x**3 + 8 * x**4 - 3 * x**5
    b2 = 0.5 * (x**2 - 3 * x**3 + 3 * x**4 - x**5)
    b3 = 10 * x**3 - 15 * x**4 + 6 * x**5
    b4 = -4 * x**3 + 7 * x**4 - 3 * x**5
    b5 = 0.5 * (x**3 - 2 * x**4 + x**5)
    return h[0] * b0 + h[1] * b1 + h[2] * b2 + h[3] * b3 + h[4] * b4 + h[5] * b5


def dumbbell_profile(
    n: int,
    bump_radius: float = 1.0,
    neck_radius: float = 0.5,
    neck_width: float = 1.5,
    m: int = 1024,
    cap_angle: float = 0.75 * math.pi,
) -> Profile:
    """Two round caps joined through a cylindrical neck by C^2 quintic blends.

    Each cap is ``a sin(s/a)`` up to polar angle ``cap_angle``; the blend then
    brings the warp down to ``neck_radius`` with zero slope and curvature, and
    the neck stays constant over ``neck_width``.
    """
    a, b = bump_radius, neck_radius
    if not 0 < b < a * math.sin(cap_angle):
        raise ProfileError("neck_radius must be positive and below the cap rim radius")
    s_cap = a * cap_angle
    y0, d0, c0 = a * math.sin(cap_angle), math.cos(cap_angle), -math.sin(cap_angle) / a
    ell = 2.0 * (y0 - b) / abs(d0)
    half = s_cap + ell + 0.5 * neck_width
    length = 2.0 * half
    s = np.linspace(0.0, length, m + 1)
    r = np.minimum(s, length - s)  # distance to the nearer pole

    phi = np.empty_like(s)
    cap = r <= s_cap
    blend = (r > s_cap) & (r < s_cap + ell)
    phi[cap] = a * np.sin(r[cap] / a)
    phi[blend] = _quintic_hermite(y0, d0, c0, b, 0.0, 0.0, ell, r[blend] - s_cap)
    phi[~(cap | blend)] = b
    phi[0] = phi[-1] = 0.0
    return Profile(n, s, phi)


# --- derivatives --------------------------------------------------------------


def _extend(values: np.ndarray, length: float | None, k: int = GHOST) -> np.ndarray:
    """Odd reflection across both poles.

    With ``length`` given the reflection is about the far endpoint value
    (for the grid itself, s -> 2L - s); otherwise about zero (for phi).
    """
    left = -values[k:0:-1]
    right = -values[-2 : -k - 2 : -1]
    if length is not None:
        right = right + 2.0 * length
    return np.concatenate([left, values, right])


def _d1(x: np.ndarray) -> np.ndarray:
    """Fourth-order centred first difference in index space on an extended array."""
    return (-x[4:] + 8.0 * x[3:-1] - 8.0 * x[1:-3] + x[:-4]) / 12.0


def _d2(x: np.ndarray) -> np.ndarray:
    """Second-order centred second difference in index space on an extended array."""
    return x[3:-1] - 2.0 * x[2:-2] + x[1:-3]


def derivatives(profile: Profile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (phi_s, phi_ss, s_x) at every node.

    phi_ss vanishes at the poles by odd symmetry; callers needing phi_ss/phi
    there must use :func:`pole_extrapolate`.
    """
    s = _extend(profile.grid, profile.length)
    phi = _extend(profile.warp, None)
    s_x = _d1(s)
    s_xx = _d2(s)
    phi_x = _d1(phi)
    phi_xx = _d2(phi)
    phi_s = phi_x / s_x
    phi_ss = (phi_xx - phi_s * s_xx) / (s_x * s_x)
    return phi_s, phi_ss, s_x


def pole_extrapolate(profile: Profile, values: np.ndarray) -> np.ndarray:
    """Replace both pole entries by quadratic extrapolation from the 3 nearest nodes."""
    out = values.copy()
    s = profile.grid
    for pole, idx in ((0, [1, 2, 3]), (-1, [-2, -3, -4])):
        xs = s[idx] - s[pole]
        ys = values[idx]
        # Lagrange interpolant evaluated at offset 0
        w0 = xs[1] * xs[2] / ((xs[0] - xs[1]) * (xs[0] - xs[2]))
        w1 = xs[0] * xs[2] / ((xs[1] - xs[0]) * (xs[1] - xs[2]))
        w2 = xs[0] * xs[1] / ((xs[2] - xs[0]) * (xs[2] - xs[1]))
        out[pole] = w0 * ys[0] + w1 * ys[1] + w2 * ys[2]
    return out


def curvature_terms(profile: Profile, derivs=None) -> tuple[np.ndarray, np.ndarray]:
    """Radial and tangential sectional curvatures (-phi''/phi, (1 - phi'^2)/phi^2)."""
    phi_s, phi_ss, _ = derivs if derivs is not None else derivatives(profile)
    phi = profile.warp
    radial = np.zeros_like(phi)
    tangential = np.zeros_like(phi)
    inner = slice(1, -1)
    radial[inner] = -phi_ss[inner] / phi[inner]
    tangential[inner] = (1.0 - phi_s[inner] ** 2) / phi[inner] ** 2
    return pole_extrapolate(profile, radial), pole_extrapolate(profile, tangential)


# --- curvature and integrals ----------------------------------------------------


def scalar_curvature(profile: Profile) -> np.ndarray:
    """R = -2(n-1) phi''/phi + (n-1)(n-2)(1 - phi'^2)/phi^2 at every node."""
    n = profile.n
    radial, tangential = curvature_terms(profile)
    R = 2.0 * (n - 1) * radial + (n - 1) * (n - 2) * tangential
    bad = ~np.isfinite(R)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        phi_s, phi_ss, _ = derivatives(profile)
        raise ProfileError(
            f"non-finite scalar curvature at node {i}: "
            f"phi={profile.warp[i]:.6g}, phi'={phi_s[i]:.6g}, phi''={phi_ss[i]:.6g}"
        )
    return R


def ricci_norm_squared(profile: Profile) -> np.ndarray:
    """|Ric|^2 = (n-1)^2 k_rad^2 + (n-1)(k_rad + (n-2) k_tan)^2."""
    n = profile.n
    radial, tangential = curvature_terms(profile)
    return (n - 1) ** 2 * radial**2 + (n - 1) * (radial + (n - 2) * tangential) ** 2


def measure_density(profile: Profile) -> np.ndarray:
    """|S^{n-1}| phi^{n-1}, the volume density per unit arclength."""
    return sphere_area(profile.n - 1) * profile.warp ** (profile.n - 1)


def node_weights(profile: Profile) -> np.ndarray:
    """Composite-trapezoid weights so that sum(w * f) approximates the integral of f dg."""
    ds = np.diff(profile.grid)
    w = np.zeros(profile.grid.size)
    w[:-1] += 0.5 * ds
    w[1:] += 0.5 * ds
    return w * measure_density(profile)


def integrate(profile: Profile, f: np.ndarray) -> float:
    return float(np.dot(node_weights(profile), f))


def volume(profile: Profile) -> float:
    return float(node_weights(profile).sum())


def lp_positive_curvature(profile: Profile, p: float, R: np.ndarray | None = None) -> float:
    """Integral of max(R, 0)^p dg."""
    if p < 1:
        raise ValueError("exponent p must be >= 1")
    if R is None:
        R = scalar_curvature(profile)
    return integrate(profile, np.maximum(R, 0.0) ** p)


def sup_norms(profile: Profile, R: np.ndarray | None = None) -> tuple[float, float]:
    """(||R||_inf, ||R_-||_inf) with R_- = -min(0, R)."""
    if R is None:
        R = scalar_curvature(profile)
    return float(np.abs(R).max()), float(max(0.0, -R.min()))


def pole_slopes(profile: Profile) -> tuple[float, float]:
    phi_s, _, _ = derivatives(profile)
    return float(phi_s[0]), float(phi_s[-1])


def spacing_ratio(profile: Profile) -> float:
    ds = np.diff(profile.grid)
    return float(ds.max() / ds.min()) if ds.min() > 0 else math.inf


def validate_profile(profile: Profile, tol_pole: float = TOL_POLE) -> list[str]:
    """List invariant violations; an empty list means the profile is valid."""
    problems = []
    s, phi = profile.grid, profile.warp
    if profile.n < 3:
        problems.append(f"dimension n={profile.n} < 3")
    if s.size < 8:
        problems.append(f"too few nodes ({s.size})")
        return problems
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(phi))):
        bad = np.flatnonzero(~(np.isfinite(s) & np.isfinite(phi)))
        problems.append(f"non-finite values at nodes {bad[:10].tolist()}")
        return problems
    if s[0] != 0.0:
        problems.append(f"grid must start at 0 (node 0 has s={s[0]:.6g})")
    ds = np.diff(s)
    if np.any(ds <= 0):
        problems.append(f"grid not strictly increasing at nodes {np.flatnonzero(ds <= 0)[:10].tolist()}")
        return problems
    ratio = ds.max() / ds.min()
    if ratio > MAX_SPACING_RATIO:
        problems.append(f"spacing ratio {ratio:.3g} exceeds {MAX_SPACING_RATIO}")
    if phi[0] != 0.0:
        problems.append("phi must vanish at node 0")
    if phi[-1] != 0.0:
        problems.append(f"phi must vanish at node {s.size - 1}")
    interior = phi[1:-1]
    nonpos = np.flatnonzero(interior <= 0) + 1
    if nonpos.size:
        problems.append(f"phi not positive at interior nodes {nonpos[:10].tolist()}")
        return problems
    d0, dL = pole_slopes(profile)
    if abs(d0 - 1.0) > tol_pole:
        problems.append(f"pole slope phi'(0)={d0:.6g} differs from 1 by more than {tol_pole}")
    if abs(dL + 1.0) > tol_pole:
        problems.append(f"pole slope phi'(L)={dL:.6g} differs from -1 by more than {tol_pole}")
    return problems


def require_valid(profile: Profile) -> None:
    problems = validate_profile(profile)
    if problems:
        raise ProfileError("; ".join(problems))


def geometry_report(profile: Profile, diameter: float | None = None) -> GeometryReport:
    """Collect Z, V, the L^{(n-1)/2} curvature integral and sup norms.

    ``diameter`` defaults to the meridian length, which equals the geodesic
    diameter of any rotationally symmetric sphere (both poles are at distance
    L and every other pair is joined through a pole by a path of length <= L).
    """
    R = scalar_curvature(profile)
    sup_R, sup_R_minus = sup_norms(profile, R)
    p = (profile.n - 1) / 2
    return GeometryReport(
        diameter=profile.length if diameter is None else float(diameter),
        volume=volume(profile),
        curvature_integral=lp_positive_curvature(profile, p, R),
        sup_R=sup_R,
        sup_R_minus=sup_R_minus,
    )


# --- snapshot files --------------------------------------------------------------


def write_profile_csv(profile: Profile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s", "phi"])
        for s, phi in zip(profile.grid, profile.warp):
            writer.writerow([repr(float(s)), repr(float(phi))])


def read_profile_csv(path: str | Path, n: int, time: float = 0.0) -> Profile:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["s", "phi"]:
            raise ProfileError(f"{path}: expected header 's,phi', got {reader.fieldnames}")
        rows = [(float(r["s"]), float(r["phi"])) for r in reader]
    s, phi = np.array(rows).T
    return Profile(n, s, phi, time)
