"""Scenario configuration, orchestration and on-disk outputs.

A scenario is a JSON object with a fixed schema; unknown keys are rejected.
Example::

    {
      "name": "round_s3",
      "n": 3,
      "profile": {"kind": "round", "radius": 1.0},
      "grid": 512,
      "t_end": 0.2,
      "snapshot_every": 0.01,
      "constants_strategy": "probe_fit",
      "audit": {"centers": 8, "radii": 8, "snapshots": 5},
      "heat": {"enabled": true, "l": 0.0, "fit_radius": 0.3},
      "solver": {"c_cfl": 0.2},
      "output_dir": "out/round_s3"
    }
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ricci_diameter.audit import (
    AUDIT_IDS,
    AuditRecord,
    SampleSpec,
    SnapshotAnalysis,
    Tolerances,
    analyze_snapshot,
    audit_lower,
    audit_mass,
    audit_noncollapse,
    audit_upper,
    audit_volume_bounds,
    summarize,
)
from ricci_diameter.constants import STRATEGIES
from ricci_diameter.flow import FlowControls, FlowTrajectory, evolve, reparametrize_arclength
from ricci_diameter.geometry import (
    Profile,
    dumbbell_profile,
    read_profile_csv,
    round_profile,
    write_profile_csv,
)
from ricci_diameter.heat import empirical_J, evolve_kernel, mass_series

log = logging.getLogger(__name__)

PROFILE_KINDS = {
    "round": {"radius": 1.0},
    "dumbbell": {"bump_radius": 1.0, "neck_radius": 0.5, "neck_width": 1.5},
    "explicit": {"path": None},
}
TRAJECTORY_COLUMNS = ("t", "dt", "volume", "diameter", "sup_R", "sup_R_minus", "phi_min")
AUDIT_COLUMNS = ("t", "center", "r", "lhs", "rhs", "margin", "pass", "hypothesis_met")
HEAT_COLUMNS = ("t", "mass", "bound", "margin")


class ScenarioError(ValueError):
    """Invalid or unreadable scenario configuration."""


@dataclass(frozen=True)
class AuditConfig:
    centers: int = 8
    radii: int = 8
    r_min_cells: float = 4.0
    r_cap: float = 1.0
    n_s: int = 256
    n_alpha: int = 128
    subsample: int = 4
    m2_samples: int = 32
    diameter_samples: int = 16
    snapshots: int = 5
    m2_threshold: float = 1.0

    def sample_spec(self, refine: int = 1) -> SampleSpec:
        spec = SampleSpec(
            self.centers, self.radii, self.r_min_cells, self.r_cap, self.n_s, self.n_alpha,
            self.subsample, self.m2_samples, self.diameter_samples,
        )
        return spec.refined(refine) if refine != 1 else spec


@dataclass(frozen=True)
class HeatConfig:
    enabled: bool = True
    l: float = 0.0
    center: str = "south"
    fit_radius: float = 0.3
    duration: float | None = None  # static metrics only; defaults to 2 diam^2


@dataclass(frozen=True)
class SolverConfig:
    c_cfl: float = 0.2
    curvature_dt: float = 0.05
    blowup_threshold: float | None = None
    snapshot_curvature: float | None = 0.2
    max_steps: int = 5_000_000


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    profile: dict
    grid: int
    t_end: float
    snapshot_every: float | None = None
    static: bool = False
    constants_strategy: str = "probe_fit"
    audit: AuditConfig = field(default_factory=AuditConfig)
    heat: HeatConfig = field(default_factory=HeatConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str | None = None

    def __post_init__(self):
        validate(self)

    def with_grid(self, grid: int) -> "Scenario":
        d = self.to_dict()
        d["grid"] = grid
        return Scenario.from_dict(d)

    def refined(self, factor: int = 2) -> "Scenario":
        """Every grid dimension multiplied by ``factor``."""
        d = self.to_dict()
        d["grid"] = self.grid * factor
        d["audit"]["n_s"] = self.audit.n_s * factor
        d["audit"]["n_alpha"] = self.audit.n_alpha * factor
        return Scenario.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        top = _check_keys(data, cls, "scenario")
        for req in ("name", "n", "profile", "grid", "t_end"):
            if req not in data:
                raise ScenarioError(f"missing required field '{req}'")
        sub = {"audit": AuditConfig, "heat": HeatConfig, "solver": SolverConfig}
        kwargs = {}
        for key in top:
            val = data[key]
            if key in sub:
                if not isinstance(val, dict):
                    raise ScenarioError(f"field '{key}' must be an object")
                _check_keys(val, sub[key], key)
                try:
                    val = sub[key](**val)
                except TypeError as exc:
                    raise ScenarioError(f"field '{key}': {exc}") from None
            kwargs[key] = val
        return cls(**kwargs)


def _check_keys(data: dict, cls, where: str) -> list[str]:
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return list(data)


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(f"field '{name}': {msg}")


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(sc: Scenario) -> None:
    _require(isinstance(sc.name, str) and sc.name != "", "name", "must be a non-empty string")
    _require(isinstance(sc.n, int) and not isinstance(sc.n, bool), "n", "must be an integer")
    _require(sc.n >= 3, "n", f"got {sc.n}; the diameter bounds are stated for manifolds of dimension n >= 3")
    _require(isinstance(sc.grid, int) and sc.grid >= 64, "grid", "must be an integer >= 64")
    _require(_is_num(sc.t_end) and sc.t_end > 0, "t_end", "must be a positive number")
    if sc.snapshot_every is not None:
        _require(_is_num(sc.snapshot_every) and 0 < sc.snapshot_every <= sc.t_end, "snapshot_every",
                 "must lie in (0, t_end]")
    _require(isinstance(sc.static, bool), "static", "must be a boolean")
    _require(sc.constants_strategy in STRATEGIES, "constants_strategy", f"must be one of {STRATEGIES}")
    prof = sc.profile
    _require(isinstance(prof, dict) and prof.get("kind") in PROFILE_KINDS, "profile",
             f"needs 'kind' in {sorted(PROFILE_KINDS)}")
    params = PROFILE_KINDS[prof["kind"]]
    unknown = sorted(set(prof) - set(params) - {"kind"})
    _require(not unknown, "profile", f"unknown key(s) {unknown} for kind '{prof['kind']}'")
    if prof["kind"] == "explicit":
        _require(isinstance(prof.get("path"), str), "profile.path", "explicit profiles need a CSV path")
    else:
        for k, v in prof.items():
            if k != "kind":
                _require(_is_num(v) and v > 0, f"profile.{k}", "must be a positive number")
    a = sc.audit
    for k in ("centers", "radii", "n_s", "n_alpha", "subsample", "m2_samples", "diameter_samples", "snapshots"):
        _require(isinstance(getattr(a, k), int) and getattr(a, k) >= 1, f"audit.{k}", "must be a positive integer")
    _require(a.centers >= 2, "audit.centers", "needs at least both poles")
    _require(a.m2_samples >= 32, "audit.m2_samples", "must be >= 32")
    _require(_is_num(a.r_cap) and a.r_cap > 0, "audit.r_cap", "must be positive")
    _require(_is_num(a.m2_threshold) and a.m2_threshold > 0, "audit.m2_threshold", "must be positive")
    h = sc.heat
    _require(isinstance(h.enabled, bool), "heat.enabled", "must be a boolean")
    _require(h.center in ("south", "north"), "heat.center", "must be 'south' or 'north'")
    _require(_is_num(h.l) and 0 <= h.l < sc.t_end, "heat.l", "must lie in [0, t_end)")
    _require(_is_num(h.fit_radius) and h.fit_radius > 0, "heat.fit_radius", "must be positive")
    s = sc.solver
    _require(_is_num(s.c_cfl) and 0 < s.c_cfl <= 0.25, "solver.c_cfl", "must lie in (0, 0.25]")
    _require(_is_num(s.curvature_dt) and s.curvature_dt > 0, "solver.curvature_dt", "must be positive")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    sc = Scenario.from_dict(data)
    if sc.profile["kind"] == "explicit" and not Path(sc.profile["path"]).is_absolute():
        prof = dict(sc.profile, path=str(path.parent / sc.profile["path"]))
        sc = Scenario.from_dict(dict(sc.to_dict(), profile=prof))
    return sc


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n")


def initial_profile(sc: Scenario) -> Profile:
    p = sc.profile
    if p["kind"] == "round":
        return round_profile(sc.n, p.get("radius", 1.0), sc.grid)
    if p["kind"] == "dumbbell":
        kw = {k: p[k] for k in ("bump_radius", "neck_radius", "neck_width") if k in p}
        return dumbbell_profile(sc.n, m=sc.grid, **kw)
    return reparametrize_arclength(read_profile_csv(p["path"], sc.n), sc.grid)


def flow_controls(sc: Scenario) -> FlowControls:
    s = sc.solver
    return FlowControls(
        c_cfl=s.c_cfl,
        curvature_dt=s.curvature_dt,
        blowup_threshold=s.blowup_threshold,
        snapshot_every=sc.snapshot_every,
        snapshot_curvature=s.snapshot_curvature,
        max_steps=s.max_steps,
    )


# ---------------------------------------------------------------- results


@dataclass
class RunResult:
    scenario: Scenario
    trajectory: FlowTrajectory
    analyses: list[SnapshotAnalysis] = field(default_factory=list)
    records: dict[str, list[AuditRecord]] = field(default_factory=dict)
    heat_states: list = field(default_factory=list)
    heat_fit: object = None
    summary: dict = field(default_factory=dict)

    @property
    def singular(self) -> bool:
        return self.trajectory.termination == "singularity"


def simulate(sc: Scenario) -> FlowTrajectory:
    prof = initial_profile(sc)
    if sc.static:
        return FlowTrajectory.static(prof)
    return evolve(prof, sc.t_end, flow_controls(sc))


def audited_states(traj: FlowTrajectory, count: int) -> list[Profile]:
    k = len(traj.states)
    idx = np.unique(np.round(np.linspace(0, k - 1, min(count, k))).astype(int))
    return [traj.states[i] for i in idx]


def run(sc: Scenario, stages: tuple[str, ...] = ("constants", "audit", "heat"), refine: int = 1) -> RunResult:
    """Evolve, then compute constants, audits and the heat kernel as requested."""
    traj = simulate(sc)
    res = RunResult(sc, traj)
    tol = Tolerances(m2_threshold=sc.audit.m2_threshold)
    spec = sc.audit.sample_spec(refine)
    recs = []
    if "constants" in stages or "audit" in stages:
        for p in audited_states(traj, sc.audit.snapshots):
            an = analyze_snapshot(p, spec, sc.constants_strategy)
            if "audit" in stages:
                recs += audit_noncollapse([an], spec, tol)
            # sub-cell sample caches dominate memory at fine grids
            for f in an.fields:
                f.release_cache()
            res.analyses.append(an)
    if "audit" in stages:
        recs += audit_upper(res.analyses)
        recs += audit_lower(traj, tol) + audit_volume_bounds(traj, tol)
        for r in recs:
            res.records.setdefault(r.id, []).append(r)
    if "heat" in stages and sc.heat.enabled:
        duration = sc.heat.duration
        t_end = None
        if sc.static:
            t_end = sc.heat.l + (duration if duration is not None else 2.0 * traj.states[0].length ** 2)
        states = evolve_kernel(traj, sc.heat.l, sc.heat.center, t_end=t_end)
        res.heat_states = states
        res.heat_fit = empirical_J(states, traj, sc.heat.fit_radius, sc.heat.center)
        res.records["mass_bound"] = audit_mass(mass_series(states, traj, tol.mass_bound), traj, tol)
    res.summary = build_summary(res)
    return res


def build_summary(res: RunResult) -> dict:
    traj = res.trajectory
    d = traj.diagnostics
    out = {
        "scenario": res.scenario.name,
        "n": res.scenario.n,
        "grid": res.scenario.grid,
        "termination": traj.termination,
        "event": traj.event,
        "t_final": float(traj.states[-1].time),
        "steps": int(d["t"].size - 1),
        "snapshots": len(traj.states),
        "initial": {"volume": float(d["volume"][0]), "diameter": float(d["length"][0]), "sup_R": float(d["sup_R"][0]),
                    "sup_R_minus": float(d["sup_R_minus"][0])},
        "final": {"volume": float(d["volume"][-1]), "diameter": float(d["length"][-1]), "sup_R": float(d["sup_R"][-1]),
                  "sup_R_minus": float(d["sup_R_minus"][-1])},
    }
    if res.analyses:
        dev = [abs(a.diameter.diameter - a.profile.length) / a.profile.length for a in res.analyses]
        out["diameter_fast_marching_max_rel_dev"] = max(dev)
        out["constants"] = [a.constants.to_json() for a in res.analyses]
        out["caveat"] = "Y_sym is minimised over rotationally symmetric functions and is an upper bound for Y(g)"
    if res.records:
        out["audits"] = summarize(res.records)
        fitted = {}
        if "thm_a" in res.records and res.records["thm_a"]:
            fitted["C0_max"] = res.records["thm_a"][0].components["C0_max"]
        if "thm_b" in res.records and res.records["thm_b"]:
            fitted["c_fit"] = res.records["thm_b"][0].components["c_fit"]
        if res.heat_fit is not None:
            fitted.update({"c1_fit": res.heat_fit.c1_fit, "c2_fit": res.heat_fit.c2_fit, "heat_fit_ok": res.heat_fit.fit})
        out["fitted"] = fitted
        theorem_true = ("qkappa", "m2_threshold", "mass_bound", "vol_upper", "vol_lower", "rminus_decay", "final_Z")
        out["theorem_true_failures"] = sum(out["audits"][k]["failed"] for k in theorem_true)
    return _clean(out)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


# ---------------------------------------------------------------- writers


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_trajectory_csv(traj: FlowTrajectory, path: Path) -> None:
    d = traj.diagnostics
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(d["t"].size):
            w.writerow([_fmt(d[c][k]) if c != "diameter" else _fmt(d["length"][k]) for c in TRAJECTORY_COLUMNS])


def write_audit_csv(records: list[AuditRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUDIT_COLUMNS)
        for r in records:
            w.writerow([_fmt(r.t), _fmt(r.center), _fmt(r.r), _fmt(r.lhs), _fmt(r.rhs), _fmt(r.margin),
                        _fmt(r.passed), _fmt(r.hypothesis_met)])


def write_heat_csv(records: list[AuditRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEAT_COLUMNS)
        for r in records:
            w.writerow([_fmt(r.t), _fmt(r.lhs), _fmt(r.rhs), _fmt(r.margin)])


def write_outputs(res: RunResult, out: Path, figures: bool = False) -> list[Path]:
    """Write every available artifact of ``res`` below ``out``; return the written paths."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def mark(p):
        written.append(p)
        return p

    write_trajectory_csv(res.trajectory, mark(out / "trajectory.csv"))
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    for i, st in enumerate(res.trajectory.states):
        write_profile_csv(st, mark(snap / f"snapshot_{i:04d}.csv"))
    if res.analyses:
        cdir = out / "constants"
        cdir.mkdir(exist_ok=True)
        for i, a in enumerate(res.analyses):
            write_json(mark(cdir / f"constants_{i:04d}.json"), a.constants.to_json())
    if res.records:
        adir = out / "audit"
        adir.mkdir(exist_ok=True)
        for key in AUDIT_IDS:
            if key in res.records:
                write_audit_csv(res.records[key], mark(adir / f"{key}.csv"))
    if res.heat_states:
        hdir = out / "heat"
        hdir.mkdir(exist_ok=True)
        write_heat_csv(res.records.get("mass_bound", []), mark(hdir / "heat_mass.csv"))
        if res.heat_fit is not None:
            fit = dict(res.heat_fit.to_json(), fit=res.heat_fit.fit, reason=res.heat_fit.reason)
            write_json(mark(hdir / "heat_fit.json"), fit)
    write_json(mark(out / "summary.json"), res.summary)
    if figures:
        from ricci_diameter.plotting import render_figures

        written += render_figures(res, out / "figures")
    return written
