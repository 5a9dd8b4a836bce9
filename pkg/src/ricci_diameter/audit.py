"""Audits of the diameter bounds and of the quantitative steps in their proof.

Every check produces :class:`AuditRecord` rows with both sides of the
inequality, the named terms of the right-hand side and a margin.  Conditional
implications are gated: when a side condition fails the record is kept with
``hypothesis_met = False`` and counts as passing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ricci_diameter.constants import ConstantsReport, compute_constants
from ricci_diameter.distance import (
    DEFAULT_N_S,
    DiameterResult,
    DistanceField,
    diameter,
    maximal_M2,
    m2_radii,
    solve_distance,
)
from ricci_diameter.flow import FlowTrajectory
from ricci_diameter.geometry import Profile, lp_positive_curvature, volume
from ricci_diameter.heat import MassRecord

AUDIT_IDS = (
    "thm_a",
    "thm_b",
    "qkappa",
    "m2_threshold",
    "final_Z",
    "vol_upper",
    "vol_lower",
    "vol_identity",
    "rminus_decay",
    "mass_bound",
)


@dataclass(frozen=True)
class Tolerances:
    vol_identity: float = 1e-3
    vol_upper: float = 1e-9
    vol_lower: float = 1e-3
    rminus_decay: float = 1e-3
    mass_bound: float = 2e-3
    thm_b_slack: float = 1e-2
    m2_threshold: float = 1.0


@dataclass(frozen=True)
class SampleSpec:
    centers: int = 8
    radii: int = 8
    r_min_cells: float = 4.0
    r_cap: float = 1.0
    n_s: int = DEFAULT_N_S
    n_alpha: int = 128
    subsample: int = 4
    m2_samples: int = 32
    diameter_samples: int = 16
    diameter_n_alpha: int = 64

    def refined(self, factor: int = 2) -> "SampleSpec":
        return SampleSpec(
            self.centers,
            self.radii,
            self.r_min_cells,
            self.r_cap,
            self.n_s * factor,
            self.n_alpha * factor,
            self.subsample,
            self.m2_samples,
            self.diameter_samples,
            self.diameter_n_alpha * factor,
        )


@dataclass
class AuditRecord:
    t: float
    id: str
    lhs: float
    rhs: float
    components: dict
    margin: float
    passed: bool
    hypothesis_met: bool = True
    center: float | None = None
    r: float | None = None
    constants: dict = field(default_factory=dict)


def _qkappa_rhs(c):
    return (64.0 * c["A"] * (1.0 + c["M2"]) + 16.0 * c["B"] * c["r"] ** 2) ** (-c["n"] / 2.0)


def _thm_a_rhs(c):
    return c["C0_max"] * (c["A"] + c["B"] + 1.0) ** (c["n"] / 2.0) * (1.0 + c["V"] + c["I"])


def _thm_b_rhs(c):
    rho, n, t = c["R_minus0"], c["n"], c["t"]
    return c["c_fit"] * (1.0 + 2.0 / n * rho * t) ** -0.5 * math.exp(-t * rho / n)


def _rminus_rhs(c):
    rho = c["R_minus0"]
    return 0.0 if rho == 0 else 1.0 / (1.0 / rho + 2.0 * c["t"] / c["n"])


COMBINE = {
    "qkappa": _qkappa_rhs,
    "m2_threshold": lambda c: c["threshold"],
    "final_Z": lambda c: 96.0 * c["I"] / c["kappa0"],
    "thm_a": _thm_a_rhs,
    "thm_b": _thm_b_rhs,
    "vol_upper": lambda c: c["V0"] * (2.0 / c["n"] * c["R_minus0"] * c["t"] + 1.0) ** (c["n"] / 2.0),
    "vol_lower": lambda c: math.exp(-c["int_sup_R"]) * c["V0"],
    "vol_identity": lambda c: c["tol"] * max(1.0, abs(c["int_R"])),
    "rminus_decay": _rminus_rhs,
    "mass_bound": lambda c: (1.0 + 2.0 / c["n"] * c["R_minus0"] * c["t_minus_l"]) ** (c["n"] / 2.0),
}


def recombine(record: AuditRecord) -> float:
    return COMBINE[record.id](record.components)


# ---------------------------------------------------------------- per-snapshot geometry


@dataclass
class SnapshotAnalysis:
    profile: Profile
    diameter: DiameterResult
    fields: list[DistanceField]
    radii: np.ndarray
    constants: ConstantsReport
    volume: float
    I: float  # int R_+^{(n-1)/2} dg

    @property
    def t(self) -> float:
        return self.profile.time

    @property
    def cones(self) -> list[tuple[DistanceField, float]]:
        return [(f, r) for f in self.fields for r in self.radii]


def sample_radii(spec: SampleSpec, cell: float, diam: float) -> np.ndarray:
    hi = min(spec.r_cap, 0.999 * diam / 2.0)
    lo = min(spec.r_min_cells * cell, hi)
    return np.geomspace(lo, hi, spec.radii)


def analyze_snapshot(profile: Profile, spec: SampleSpec = SampleSpec(), strategy: str = "probe_fit") -> SnapshotAnalysis:
    diam = diameter(profile, spec.diameter_samples, n_alpha=spec.diameter_n_alpha, n_s=spec.n_s)
    centers = np.linspace(0.0, profile.length, spec.centers)
    fields = [solve_distance(profile, c, spec.n_alpha, spec.n_s, spec.subsample) for c in centers]
    cell = float(np.diff(fields[0].profile.grid).max())
    radii = sample_radii(spec, cell, diam.diameter)
    analysis = SnapshotAnalysis(
        profile,
        diam,
        fields,
        radii,
        None,  # filled below
        volume(profile),
        lp_positive_curvature(profile, (profile.n - 1) / 2.0),
    )
    analysis.constants = compute_constants(profile, strategy, analysis.cones)
    return analysis


def _constants_dict(c: ConstantsReport) -> dict:
    return {"A": c.A, "B": c.B, "kappa0": c.kappa0, "strategy": c.strategy}


# ---------------------------------------------------------------- noncollapsing


def audit_noncollapse(
    analyses: list[SnapshotAnalysis], spec: SampleSpec = SampleSpec(), tol: Tolerances = Tolerances()
) -> list[AuditRecord]:
    """Quantified non-collapsing at every (t, centre, r), and the M_2 threshold implication."""
    out = []
    for an in analyses:
        c = an.constants
        n = an.profile.n
        Z = an.diameter.diameter
        for f in an.fields:
            for r in an.radii:
                r = float(r)
                kappa = float(f.ball_volume(r)) / r**n
                M2 = maximal_M2(an.profile, f, r, spec.m2_samples)
                comp = {"A": c.A, "B": c.B, "M2": M2, "r": r, "n": n}
                rhs = _qkappa_rhs(comp)
                hyp = r < Z / 2.0
                out.append(
                    AuditRecord(an.t, "qkappa", kappa, rhs, comp, kappa - rhs, (not hyp) or kappa >= rhs, hyp,
                                f.center_s, r, _constants_dict(c))
                )
                comp2 = {"threshold": tol.m2_threshold, "kappa": kappa, "kappa0": c.kappa0}
                hyp2 = kappa <= c.kappa0 and r <= 1.0 and r < Z / 2.0
                out.append(
                    AuditRecord(an.t, "m2_threshold", M2, tol.m2_threshold, comp2, M2 - tol.m2_threshold,
                                (not hyp2) or M2 >= tol.m2_threshold, hyp2, f.center_s, r, _constants_dict(c))
                )
    return out


def critical_radii(field: DistanceField, kappa0: float, samples: int = 64) -> dict | None:
    """Smallest rho with |B(x, rho)|/rho^n = kappa0, and a radius s1 <= s_x with rho^2 avg R_+ >= 1.

    Returns None when the sampled ratio never reaches kappa0.
    """
    n = field.n
    cell = float(np.diff(field.profile.grid).min())
    rho = np.geomspace(cell, field.max_dist, samples)
    ratio = field.ball_volume(rho) / rho**n
    below = np.flatnonzero(ratio <= kappa0)
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        s_x = float(rho[0])
    else:
        lo, hi = float(rho[k - 1]), float(rho[k])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if field.ball_volume(mid) / mid**n <= kappa0:
                hi = mid
            else:
                lo = mid
        s_x = hi
    cand = m2_radii(field, s_x, samples)
    avg = field.curvature_in_ball(cand) * cand**2 / np.maximum(field.ball_volume(cand), 1e-300)
    ok = np.flatnonzero(avg >= 1.0)
    out = {"s_x": s_x, "ratio_s_x": float(field.ball_volume(s_x)) / s_x**n, "s1_x": None, "ratio_s1": None, "m2_s1": None}
    if ok.size:
        s1 = float(cand[ok[-1]])
        out.update(s1_x=s1, ratio_s1=float(field.ball_volume(s1)) / s1**n, m2_s1=float(avg[ok[-1]]))
    return out


# ---------------------------------------------------------------- upper bound


def audit_upper(analyses: list[SnapshotAnalysis]) -> list[AuditRecord]:
    """Proof-form bound Z <= 96 I / kappa0 under its hypotheses, and the required C0 of the theorem form."""
    out = []
    required = []
    for an in analyses:
        c = an.constants
        n = an.profile.n
        Z, V, I = an.diameter.diameter, an.volume, an.I
        comp = {"I": I, "kappa0": c.kappa0, "Z": Z, "V": V, "n": n}
        rhs = 96.0 * I / c.kappa0
        hyp = Z >= 2.0 and Z >= V * 4.0 ** (n + 2) / c.kappa0
        out.append(AuditRecord(an.t, "final_Z", Z, rhs, comp, rhs - Z, (not hyp) or Z <= rhs, hyp,
                               constants=_constants_dict(c)))
        required.append(Z / ((c.A + c.B + 1.0) ** (n / 2.0) * (1.0 + V + I)))
    c0_max = max(required) if required else math.nan
    for an, req in zip(analyses, required):
        c = an.constants
        comp = {"C0_max": c0_max, "C0_required": req, "A": c.A, "B": c.B, "V": an.volume, "I": an.I, "n": an.profile.n}
        rhs = _thm_a_rhs(comp)
        Z = an.diameter.diameter
        out.append(AuditRecord(an.t, "thm_a", Z, rhs, comp, rhs - Z, Z <= rhs * (1 + 1e-12), True,
                               constants=_constants_dict(c)))
    return out


# ---------------------------------------------------------------- lower bound


def lower_bound_series(trajectory: FlowTrajectory) -> dict[str, np.ndarray]:
    """Q(t) = diam e^{(2/n) int ||R||_inf} / V(0)^{1/n} and the time factor of H, per snapshot.

    The diameter of a rotationally symmetric sphere is its meridian length.
    """
    n = trajectory.n
    t = trajectory.times
    diam = np.array([p.length for p in trajectory.states])
    rho = float(trajectory.diagnostics["sup_R_minus"][0])
    V0 = float(trajectory.diagnostics["volume"][0])
    integ = np.array([trajectory.integrated_sup_R(x) for x in t])
    Q = diam * np.exp(2.0 / n * integ) / V0 ** (1.0 / n)
    factor = (1.0 + 2.0 / n * rho * t) ** -0.5 * np.exp(-t * rho / n)
    return {"t": t, "diam": diam, "Q": Q, "factor": factor, "R_minus0": np.full_like(t, rho)}


def audit_lower(trajectory: FlowTrajectory, tol: Tolerances = Tolerances()) -> list[AuditRecord]:
    ser = lower_bound_series(trajectory)
    n = trajectory.n
    c_fit = float(ser["Q"][0] / ser["factor"][0])
    out = []
    for t, diam, Q in zip(ser["t"], ser["diam"], ser["Q"]):
        comp = {"c_fit": c_fit, "R_minus0": float(ser["R_minus0"][0]), "n": n, "t": float(t), "diam": float(diam)}
        rhs = _thm_b_rhs(comp)
        sqrt_branch = diam >= math.sqrt(max(t, 0.0))
        hyp = not sqrt_branch
        ok = sqrt_branch or Q >= rhs * (1.0 - tol.thm_b_slack)
        out.append(AuditRecord(float(t), "thm_b", float(Q), rhs, comp, float(Q) - rhs, ok, hyp))
    return out


# ---------------------------------------------------------------- volume, curvature decay


def audit_volume_bounds(trajectory: FlowTrajectory, tol: Tolerances = Tolerances()) -> list[AuditRecord]:
    d = trajectory.diagnostics
    n = trajectory.n
    V0 = float(d["volume"][0])
    rho = float(d["sup_R_minus"][0])
    t0 = float(d["t"][0])
    out = []
    for k in range(d["t"].size):
        t = float(d["t"][k])
        tau = t - t0
        V = float(d["volume"][k])
        comp = {"V0": V0, "R_minus0": rho, "t": tau, "n": n}
        rhs = COMBINE["vol_upper"](comp)
        out.append(AuditRecord(t, "vol_upper", V, rhs, comp, rhs - V, V <= rhs * (1 + tol.vol_upper)))

        comp = {"V0": V0, "int_sup_R": float(d["int_sup_R"][k])}
        rhs = COMBINE["vol_lower"](comp)
        out.append(AuditRecord(t, "vol_lower", V, rhs, comp, V - rhs, V >= rhs * (1 - tol.vol_lower)))

        rate = float(d["vol_rate"][k])
        if math.isfinite(rate):
            comp = {"tol": tol.vol_identity, "int_R": float(d["int_R"][k]), "dt": float(d["dt"][k])}
            rhs = COMBINE["vol_identity"](comp)
            out.append(AuditRecord(t, "vol_identity", abs(rate), rhs, comp, rhs - abs(rate), abs(rate) <= rhs))

        comp = {"R_minus0": rho, "t": tau, "n": n}
        rhs = _rminus_rhs(comp)
        lhs = float(d["sup_R_minus"][k])
        slack = tol.rminus_decay * max(rhs, 1e-6 * float(d["sup_R"][k]))
        out.append(AuditRecord(t, "rminus_decay", lhs, rhs, comp, rhs - lhs, lhs <= rhs + slack))
    return out


def audit_mass(records: list[MassRecord], trajectory: FlowTrajectory, tol: Tolerances = Tolerances()) -> list[AuditRecord]:
    n = trajectory.n
    rho = float(trajectory.diagnostics["sup_R_minus"][0])
    l = records[0].t if records else 0.0
    out = []
    for m in records:
        comp = {"R_minus0": rho, "t_minus_l": m.t - l, "n": n}
        rhs = COMBINE["mass_bound"](comp)
        out.append(AuditRecord(m.t, "mass_bound", m.mass, rhs, comp, rhs - m.mass, m.mass <= rhs * (1 + tol.mass_bound)))
    return out


def summarize(records: dict[str, list[AuditRecord]]) -> dict:
    out = {}
    for key in AUDIT_IDS:
        rows = records.get(key, [])
        out[key] = {
            "records": len(rows),
            "passed": sum(r.passed for r in rows),
            "failed": sum(not r.passed for r in rows),
            "hypothesis_met": sum(r.hypothesis_met for r in rows),
            "min_margin": min((r.margin for r in rows if r.hypothesis_met), default=None),
        }
    return out
