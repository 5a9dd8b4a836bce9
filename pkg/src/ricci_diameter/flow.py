"""Explicit method-of-lines integration of Ricci flow for warped-product spheres.

At a fixed material point the flow reduces to

    phi_t = phi_ss - (n-2) (1 - phi_s^2) / phi,    d(ds)/dt = (n-1) (phi_ss / phi) ds.

The solver keeps the grid uniform in arclength, s_i = L(t) i/m, by adding the
tangential drift that undoes the stretching of the meridian measure; the
meridian length then evolves by dL/dt = (n-1) * integral of phi_ss/phi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from ricci_diameter.geometry import (
    TOL_POLE,
    Profile,
    _extend,
    curvature_terms,
    derivatives,
    integrate,
    require_valid,
    scalar_curvature,
    spacing_ratio,
    volume,
)

log = logging.getLogger(__name__)


class FlowError(RuntimeError):
    """Hard numerical failure (non-finite state)."""


class SingularityDetected(RuntimeError):
    def __init__(self, message: str, node: int | None = None, time: float | None = None):
        super().__init__(message)
        self.node = node
        self.time = time


@dataclass
class FlowControls:
    c_cfl: float = 0.2
    curvature_dt: float = 0.05
    blowup_threshold: float | None = None  # defaults to 1e6 / L0^2
    snapshot_every: float | None = None  # defaults to t_end / 20
    snapshot_curvature: float | None = 0.2  # also snapshot once int ||R||_inf dt reaches this
    max_steps: int = 5_000_000


@dataclass
class FlowTrajectory:
    states: list[Profile]
    diagnostics: dict[str, np.ndarray]
    horizon: float
    termination: str
    event: dict | None = None
    controls: FlowControls = field(default_factory=FlowControls)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.states])

    @property
    def n(self) -> int:
        return self.states[0].n

    def integrated_sup_R(self, t: float) -> float:
        """Integral of ||R(., s)||_inf over [0, t], trapezoid over the step record."""
        return float(np.interp(t, self.diagnostics["t"], self.diagnostics["int_sup_R"]))

    @classmethod
    def static(cls, profile: Profile) -> "FlowTrajectory":
        """A one-state trajectory for a frozen metric."""
        R = scalar_curvature(profile)
        v = volume(profile)
        diag = {
            "t": np.array([profile.time]),
            "dt": np.array([0.0]),
            "sup_R": np.array([float(np.abs(R).max())]),
            "sup_R_minus": np.array([float(max(0.0, -R.min()))]),
            "volume": np.array([v]),
            "int_R": np.array([integrate(profile, R)]),
            "vol_rate": np.array([np.nan]),
            "cfl_margin": np.array([np.nan]),
            "phi_min": np.array([float(profile.warp[1:-1].min())]),
            "length": np.array([profile.length]),
            "int_sup_R": np.array([0.0]),
        }
        return cls([profile], diag, profile.time, "static")


def _pole_region(phi_s: np.ndarray, m: int) -> int:
    """Largest k (3 <= k <= m/8) with |phi_s| >= 1/2 on the first and last k+1 nodes."""
    cap = max(3, m // 8)
    left = np.flatnonzero(phi_s[: cap + 1] < 0.5)
    right = np.flatnonzero(phi_s[::-1][: cap + 1] > -0.5)
    k = cap
    if left.size:
        k = min(k, int(left[0]) - 1)
    if right.size:
        k = min(k, int(right[0]) - 1)
    return max(k, 3)


def tangential_velocity(profile: Profile, derivs=None, terms=None) -> np.ndarray:
    """W(s) = (n-1) * integral_0^s phi_ss/phi ds, the arclength drift of material points.

    Near each pole phi_ss/phi is a third-derivative quantity divided by a small
    warp and feeding it back into the flow is unstable.  There the integral is
    rewritten exactly (valid while phi_s != 0) as

        -1/2 int k_tan - phi k_tan / (2 phi_s) - int k_tan phi phi_ss / (2 phi_s^2)

    with k_tan = (1 - phi_s^2)/phi^2, which involves no division of phi_ss by phi.
    """
    n, s, phi, L, m = profile.n, profile.grid, profile.warp, profile.length, profile.m
    derivs = derivs if derivs is not None else derivatives(profile)
    phi_s, phi_ss, _ = derivs
    k_rad, k_tan = terms if terms is not None else curvature_terms(profile, derivs)
    ratio = -k_rad
    k = _pole_region(phi_s, m)

    with np.errstate(divide="ignore", invalid="ignore"):
        g = k_tan * (0.5 + phi * phi_ss / (2.0 * phi_s**2))
        edge = phi * k_tan / (2.0 * phi_s)
    integral = np.empty_like(phi)
    integral[: k + 1] = -cumulative_trapezoid(g[: k + 1], s[: k + 1], initial=0.0) - edge[: k + 1]
    integral[k:] = integral[k] + cumulative_trapezoid(ratio[k:], s[k:], initial=0.0)

    j = m - k
    # integral from s to L, mirrored identity (phi_s changes sign)
    tail = cumulative_trapezoid(g[j:][::-1], L - s[j:][::-1], initial=0.0)[::-1]
    tail = -tail + edge[j:]
    tail[-1] = 0.0
    total = integral[j] + tail[0]
    integral[j:] = total - tail
    integral[0] = 0.0
    return (n - 1) * integral


def flow_rates(profile: Profile) -> tuple[np.ndarray, float, np.ndarray]:
    """Return (phi_t at fixed normalized arclength, dL/dt, R).

    The grid is s_i = L * i/m at all times; the tangential term keeps it so.
    """
    n = profile.n
    phi = profile.warp
    derivs = derivatives(profile)
    phi_s, phi_ss, _ = derivs
    radial, tangential = curvature_terms(profile, derivs)
    W = tangential_velocity(profile, derivs, (radial, tangential))
    drift = W - (profile.grid / profile.length) * W[-1]
    inner = slice(1, -1)
    phi_t = np.zeros_like(phi)
    phi_t[inner] = (
        phi_ss[inner] - (n - 2) * (1.0 - phi_s[inner] ** 2) / phi[inner] - phi_s[inner] * drift[inner]
    )
    R = 2.0 * (n - 1) * radial + (n - 1) * (n - 2) * tangential
    return phi_t, float(W[-1]), R


def stability_bound(profile: Profile, c_cfl: float = 0.2) -> float:
    return c_cfl * float(np.diff(profile.grid).min()) ** 2


def _advance(profile: Profile, dt: float, phi_t: np.ndarray, length_rate: float) -> Profile:
    length = profile.length + dt * length_rate
    if not np.isfinite(length) or not np.all(np.isfinite(phi_t)):
        bad = np.flatnonzero(~np.isfinite(phi_t))
        node = int(bad[0]) if bad.size else None
        raise FlowError(f"non-finite state after step at t={profile.time:.6g}, node {node}")
    if length <= 0:
        raise SingularityDetected("meridian length collapsed", None, profile.time + dt)
    grid = profile.grid * (length / profile.length)
    grid[-1] = length
    warp = profile.warp + dt * phi_t
    warp[0] = warp[-1] = 0.0
    interior = warp[1:-1]
    if np.any(interior <= 0):
        node = int(np.argmin(interior)) + 1
        raise SingularityDetected(f"warp reached zero at interior node {node}", node, profile.time + dt)
    return Profile(profile.n, grid, warp, profile.time + dt)


def step(state: Profile, dt: float, c_cfl: float = 0.2) -> Profile:
    """One forward-Euler step of the reduced Ricci flow."""
    bound = stability_bound(state, c_cfl)
    if not 0 < dt <= bound * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} outside (0, {bound:.3g}] (c_cfl * min ds^2)")
    phi_t, length_rate, _ = flow_rates(state)
    return _advance(state, dt, phi_t, length_rate)


def reparametrize_arclength(state: Profile, m: int | None = None) -> Profile:
    """Resample phi onto a uniform arclength grid with an odd-extended cubic spline."""
    m = state.m if m is None else m
    k = 4
    s_ext = _extend(state.grid, state.length, k)
    phi_ext = _extend(state.warp, None, k)
    spline = CubicSpline(s_ext, phi_ext)
    s_new = np.linspace(0.0, state.length, m + 1)
    phi_new = spline(s_new)
    phi_new[0] = phi_new[-1] = 0.0
    return Profile(state.n, s_new, phi_new, state.time)


def _phi_min(profile: Profile) -> float:
    return float(profile.warp[1:-1].min())


def neck_radius(profile: Profile) -> float:
    """Smallest interior local minimum of phi (inf when phi has no neck)."""
    phi = profile.warp
    inner = phi[1:-1]
    is_min = (inner <= phi[:-2]) & (inner <= phi[2:])
    is_min[:2] = False
    is_min[-2:] = False
    return float(inner[is_min].min()) if is_min.any() else math.inf


def _diag_row(rows: dict, state: Profile, R: np.ndarray, vol: float, int_R: float) -> None:
    rows["t"].append(state.time)
    rows["sup_R"].append(float(np.abs(R).max()))
    rows["sup_R_minus"].append(float(max(0.0, -R.min())))
    rows["volume"].append(vol)
    rows["int_R"].append(int_R)
    rows["phi_min"].append(_phi_min(state))
    rows["length"].append(state.length)


def evolve(initial: Profile, t_end: float, controls: FlowControls | None = None) -> FlowTrajectory:
    """Integrate from ``initial.time`` to ``t_end`` or the first singular time.

    Non-uniform initial grids are resampled to uniform arclength first.  Each
    step records dt, ||R||_inf, volume, int R dg, the volume-identity residual
    (V_new - V)/dt + mean(int R dg) and the CFL margin.
    """
    controls = controls or FlowControls()
    if t_end <= initial.time:
        raise ValueError("t_end must exceed the initial time")
    require_valid(initial)
    state = initial
    if spacing_ratio(state) > 1.0 + 1e-9:
        state = reparametrize_arclength(state)
    L0 = state.length
    blowup = controls.blowup_threshold or 1e6 / L0**2
    cadence = controls.snapshot_every or (t_end - state.time) / 20.0
    done = lambda st: st.time >= t_end - 1e-12 * max(1.0, t_end)  # noqa: E731

    keys = ("t", "dt", "sup_R", "sup_R_minus", "volume", "int_R", "vol_rate", "cfl_margin", "phi_min", "length")
    rows: dict[str, list] = {k: [] for k in keys}
    states = [state]
    next_snap = state.time + cadence
    curv_since = 0.0
    termination = "user_stop"
    phi_t, length_rate, R = flow_rates(state)
    vol = volume(state)
    int_R = integrate(state, R)

    for _ in range(controls.max_steps):
        sup_R = float(np.abs(R).max())
        if sup_R > blowup or neck_radius(state) < TOL_POLE * L0:
            termination = "singularity"
            break
        if done(state):
            termination = "reached_T"
            break
        dt_cfl = stability_bound(state, controls.c_cfl)
        dt = min(dt_cfl, controls.curvature_dt / sup_R, t_end - state.time)
        snap_due = next_snap - state.time <= dt * (1 + 1e-9)
        if snap_due:
            dt = next_snap - state.time
        try:
            new = _advance(state, dt, phi_t, length_rate)
        except SingularityDetected:
            termination = "singularity"
            break
        new_phi_t, new_rate, new_R = flow_rates(new)
        new_vol = volume(new)
        new_int_R = integrate(new, new_R)
        _diag_row(rows, state, R, vol, int_R)
        rows["dt"].append(dt)
        rows["vol_rate"].append((new_vol - vol) / dt + 0.5 * (int_R + new_int_R))
        rows["cfl_margin"].append(dt_cfl / dt)

        curv_since += 0.5 * dt * (sup_R + float(np.abs(new_R).max()))
        state, phi_t, length_rate, R, vol, int_R = new, new_phi_t, new_rate, new_R, new_vol, new_int_R
        curv_due = controls.snapshot_curvature is not None and curv_since >= controls.snapshot_curvature
        if snap_due or curv_due or done(state):
            states.append(state)
            curv_since = 0.0
            if snap_due:
                next_snap = state.time + cadence

    if states[-1] is not state:
        states.append(state)
    _diag_row(rows, state, R, vol, int_R)
    rows["dt"].append(0.0)
    rows["vol_rate"].append(np.nan)
    rows["cfl_margin"].append(np.nan)

    diag = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    sup = diag["sup_R"]
    diag["int_sup_R"] = np.concatenate([[0.0], np.cumsum(0.5 * (sup[1:] + sup[:-1]) * np.diff(diag["t"]))])
    traj = FlowTrajectory(states, diag, t_end, termination, controls=controls)
    if termination == "singularity":
        traj.event = detect_singularity(traj)
        log.info("singularity at t=%.6g: %s", state.time, traj.event["kind"])
    return traj


def detect_singularity(trajectory: FlowTrajectory) -> dict | None:
    """Classify the terminal singularity as a global shrink or an interior neckpinch."""
    if trajectory.termination != "singularity":
        return None
    final = trajectory.states[-1]
    phi = final.warp
    R = scalar_curvature(final)
    m = final.m
    margin = max(2, m // 20)
    interior = np.arange(margin, m - margin + 1)
    local_min = interior[(phi[interior] <= phi[interior - 1]) & (phi[interior] <= phi[interior + 1])]
    i_R = int(np.argmax(np.abs(R)))
    kind = "global_shrink"
    node = i_R
    if local_min.size:
        neck = int(local_min[np.argmin(phi[local_min])])
        near_neck = abs(final.grid[i_R] - final.grid[neck]) < min(final.grid[neck], final.length - final.grid[neck])
        if phi[neck] < 0.5 * phi.max() and near_neck:
            kind = "neckpinch"
            node = neck
    return {
        "kind": kind,
        "time": final.time,
        "node": node,
        "location": float(final.grid[node]),
        "phi_min": _phi_min(final),
        "sup_R": float(np.abs(R).max()),
    }


def curvature_evolution_residual(trajectory: FlowTrajectory) -> np.ndarray:
    """Mean of Delta R - dR/dt + 2|Ric|^2 between consecutive snapshots on a shared grid.

    Only meaningful when snapshots keep the same material grid (no reparametrization
    between them); R is compared node by node at fixed material coordinate.
    """
    from ricci_diameter.geometry import ricci_norm_squared

    out = []
    states = trajectory.states
    for a, b in zip(states[:-1], states[1:]):
        dt = b.time - a.time
        Ra, Rb = scalar_curvature(a), scalar_curvature(b)
        mid = Profile(a.n, 0.5 * (a.grid + b.grid), 0.5 * (a.warp + b.warp), a.time + 0.5 * dt)
        Rm = 0.5 * (Ra + Rb)
        lap = laplacian(mid, Rm)
        res = lap - (Rb - Ra) / dt + 2.0 * ricci_norm_squared(mid)
        out.append(float(np.mean(res[1:-1])))
    return np.array(out)


def laplacian(profile: Profile, f: np.ndarray) -> np.ndarray:
    """Laplacian of a rotationally symmetric function: f_ss + (n-1)(phi_s/phi) f_s."""
    phi_s, _, _ = derivatives(profile)
    s = profile.grid
    f_s = np.gradient(f, s, edge_order=2)
    f_ss = np.gradient(f_s, s, edge_order=2)
    out = f_ss.copy()
    out[1:-1] += (profile.n - 1) * phi_s[1:-1] / profile.warp[1:-1] * f_s[1:-1]
    return out


__all__ = [
    "FlowControls",
    "FlowError",
    "FlowTrajectory",
    "SingularityDetected",
    "curvature_evolution_residual",
    "detect_singularity",
    "evolve",
    "flow_rates",
    "laplacian",
    "neck_radius",
    "reparametrize_arclength",
    "stability_bound",
    "step",
    "tangential_velocity",
]


