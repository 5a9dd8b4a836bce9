"""Heat kernel centred at a pole, evolved forward on the Ricci-flow background.

As a function of (x, t) the fundamental solution G(z, l; x, t) solves
u_t = Delta_{g(t)} u, so d/dt int u dg(t) = -int R u dg(t).  The solver uses
backward Euler on the lumped system

    (M^{k+1} + dt K^{k+1} + dt M^{k+1} D^{k+1}) u^{k+1} = M^{k+1} u^k,

where D is the upwind drift of the normalized-arclength labels relative to
material points (zero on round spheres and static metrics).  Since 1^T K = 0
the discrete mass moves only through the change of the lumped weights M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ricci_diameter import operators as ops
from ricci_diameter.flow import FlowTrajectory, tangential_velocity
from ricci_diameter.geometry import Profile, scalar_curvature

BUMP_NODES = 3
NEG_FLOOR = -1e-12
CADENCE_CURVATURE = 0.3  # max of int ||R||_inf dt between snapshots


class HeatError(RuntimeError):
    pass


@dataclass(frozen=True)
class HeatState:
    t: float
    values: np.ndarray
    mass: float

    def __post_init__(self):
        if self.values.min() < NEG_FLOOR:
            raise HeatError(f"negative heat value {self.values.min():.3e} at t={self.t:.6g}")
        if not math.isfinite(self.mass):
            raise HeatError(f"non-finite mass at t={self.t:.6g}")


def _interpolate(a: Profile, b: Profile, t: float) -> Profile:
    """Metric between two snapshots, linear in phi and in L at fixed normalized arclength."""
    if b.time == a.time:
        return a
    w = (t - a.time) / (b.time - a.time)
    L = (1 - w) * a.length + w * b.length
    phi = (1 - w) * a.warp + w * b.warp
    return Profile(a.n, a.grid * (L / a.length), phi, t)


def _drift_matrix_diag(profile: Profile, static: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upwind rows of -v u_s, v being the label velocity relative to material points."""
    m1 = profile.m + 1
    lower, main, upper = np.zeros(m1), np.zeros(m1), np.zeros(m1)
    if static:
        return lower, main, upper
    W = tangential_velocity(profile)
    v = ((profile.grid / profile.length) * W[-1] - W)[1:-1]
    h = np.diff(profile.grid)
    fwd = np.maximum(v, 0.0) / h[1:]
    bwd = np.maximum(-v, 0.0) / h[:-1]
    main[1:-1] = fwd + bwd
    upper[1:-1] = -fwd
    lower[1:-1] = -bwd
    return lower, main, upper


def _initial_bump(profile: Profile, center: str) -> np.ndarray:
    m = ops.dual_weights(profile)
    idx = np.arange(BUMP_NODES) if center == "south" else profile.m - np.arange(BUMP_NODES)
    u = np.zeros(profile.m + 1)
    u[idx] = 1.0 / m[idx].sum()
    return u


def evolve_kernel(
    trajectory: FlowTrajectory,
    l: float,
    center: str = "south",
    t_end: float | None = None,
    dt_max: float | None = None,
) -> list[HeatState]:
    """Evolve a mass-1 near-delta at a pole from time l and return states at snapshot times.

    A static (one-state) trajectory is continued up to ``t_end``.  The metric is
    interpolated linearly between snapshots.
    """
    if center not in ("south", "north"):
        raise ValueError("center must be 'south' (s = 0) or 'north' (s = L)")
    states = trajectory.states
    static = len(states) == 1
    times = trajectory.times
    if static:
        if t_end is None:
            raise ValueError("a static trajectory needs an explicit t_end")
        out_times = np.linspace(l, t_end, 41)
    else:
        if not times[0] <= l < times[-1]:
            raise ValueError(f"l={l} outside the trajectory range [{times[0]}, {times[-1]})")
        for a, b in zip(states[:-1], states[1:]):
            growth = trajectory.integrated_sup_R(b.time) - trajectory.integrated_sup_R(a.time)
            if growth > CADENCE_CURVATURE * (1 + 1e-9):
                need = (b.time - a.time) * CADENCE_CURVATURE / growth
                raise HeatError(
                    f"snapshot interval {b.time - a.time:.3g} at t={a.time:.6g} too coarse; need <= {need:.3g}"
                )
        t_stop = times[-1] if t_end is None else min(t_end, times[-1])
        out_times = np.concatenate([[l], times[(times > l) & (times <= t_stop)]])

    def metric(t):
        if static:
            return states[0].with_time(t)
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(states) - 2))
        return _interpolate(states[k], states[k + 1], t)

    prof = metric(l)
    u = _initial_bump(prof, center)
    m = ops.dual_weights(prof)
    result = [HeatState(l, u.copy(), float(np.dot(m, u)))]
    h = float(np.diff(prof.grid).min())
    t = l
    for t_next in out_times[1:]:
        span = t_next - t
        if span <= 0:
            continue
        step_cap = dt_max or max(h * h, span / 50.0)
        k_steps = max(1, int(math.ceil(span / step_cap)))
        t_start = t
        for k in range(k_steps):
            dt = span / k_steps
            t_new = t_next if k == k_steps - 1 else t_start + (k + 1) * dt
            prof = metric(t_new)
            m_new = ops.dual_weights(prof)
            c = ops.conductances(prof)
            lower, main, upper = _drift_matrix_diag(prof, static)
            ab = ops.banded(c, m_new, dt)
            ab[1] += dt * m_new * main
            ab[0, 1:] += dt * m_new[:-1] * upper[:-1]
            ab[2, :-1] += dt * m_new[1:] * lower[1:]
            u = ops.solve(ab, m_new * u)
            if u.min() < NEG_FLOOR:
                raise HeatError(f"negative heat value {u.min():.3e} at t={t_new:.6g}")
            u = np.maximum(u, 0.0)
            t = t_new
        mass = float(np.dot(ops.dual_weights(prof), u))
        if mass < 0:
            raise HeatError(f"negative mass at t={t:.6g}")
        result.append(HeatState(t, u.copy(), mass))
    return result


@dataclass(frozen=True)
class MassRecord:
    t: float
    mass: float
    bound: float
    margin: float
    passed: bool


def mass_bound(t_minus_l: float, r_minus0: float, n: int) -> float:
    """[1 + (2/n) ||R_-(0)|| (t - l)]^{n/2}."""
    return (1.0 + (2.0 / n) * r_minus0 * t_minus_l) ** (n / 2.0)


def mass_series(states: list[HeatState], trajectory: FlowTrajectory, rel_tol: float = 2e-3) -> list[MassRecord]:
    n = trajectory.n
    r_minus0 = float(trajectory.diagnostics["sup_R_minus"][0])
    l = states[0].t
    out = []
    for st in states:
        b = mass_bound(st.t - l, r_minus0, n)
        out.append(MassRecord(st.t, st.mass, b, b - st.mass, st.mass <= b * (1 + rel_tol)))
    return out


@dataclass(frozen=True)
class KernelFit:
    c1_fit: float
    c2_fit: float
    r: float
    l: float
    fit: bool
    samples: int
    reason: str = ""

    def to_json(self) -> dict:
        return {"c1_fit": self.c1_fit, "c2_fit": self.c2_fit, "r": self.r, "l": self.l}


def empirical_J(states: list[HeatState], trajectory: FlowTrajectory, r: float, center: str = "south") -> KernelFit:
    """Fit the lower envelope log(c1 J) - 2 c2 xi of the kernel over d <= r.

    Data points are y = log G + (n/2) log(t - l) + int_l^t ||R||_inf + t ||R_-(0)||
    against xi = d^2/(t - l), using every state after l.  The envelope a - 2 c2 xi
    with c2 >= 0 and a - 2 c2 xi <= y everywhere that maximises its mean over
    [0, xi_max] is found by linear programming; c1_fit = exp(a) absorbs the
    unknown e^{-alpha}.  A fit with fewer than three distinct xi values or a
    vanishing xi range is reported as unfit.
    """
    n = trajectory.n
    l = states[0].t
    r_minus0 = float(trajectory.diagnostics["sup_R_minus"][0])
    static = len(trajectory.states) == 1
    xs, ys = [], []
    for st in states[1:]:
        tau = st.t - l
        if tau <= 0:
            continue
        prof = trajectory.states[0] if static else _profile_at(trajectory, st.t)
        s = prof.grid if center == "south" else prof.length - prof.grid
        mask = (s <= r) & (st.values > 0)
        if not mask.any():
            continue
        if static:
            int_sup = float(np.abs(scalar_curvature(prof)).max()) * tau
        else:
            int_sup = trajectory.integrated_sup_R(st.t) - trajectory.integrated_sup_R(l)
        xs.append(s[mask] ** 2 / tau)
        ys.append(np.log(st.values[mask]) + 0.5 * n * math.log(tau) + int_sup + st.t * r_minus0)
    if not xs:
        return KernelFit(math.nan, math.nan, r, l, False, 0, "no samples within r")
    xi = np.concatenate(xs)
    y = np.concatenate(ys)
    distinct = np.unique(np.round(xi, 12))
    xi_max = float(xi.max())
    if distinct.size < 3 or xi_max < 1e-8:
        return KernelFit(math.nan, math.nan, r, l, False, int(xi.size), "degenerate: too few distinct distances")
    # variables (a, c2); maximise a - c2 xi_max  <=>  minimise -a + c2 xi_max
    res = linprog(
        c=[-1.0, xi_max],
        A_ub=np.column_stack([np.ones_like(xi), -2.0 * xi]),
        b_ub=y,
        bounds=[(None, None), (0.0, None)],
        method="highs",
    )
    if res.status != 0:
        return KernelFit(math.nan, math.nan, r, l, False, int(xi.size), f"linprog: {res.message}")
    a, c2 = res.x
    return KernelFit(float(math.exp(a)), float(c2), r, l, True, int(xi.size))


def _profile_at(trajectory: FlowTrajectory, t: float) -> Profile:
    times = trajectory.times
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    return _interpolate(trajectory.states[k], trajectory.states[k + 1], t)
