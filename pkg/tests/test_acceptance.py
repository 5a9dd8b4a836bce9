"""Acceptance criteria for the standard scenario suite.

Each test records one pass/fail line (printed in the terminal summary) and
then asserts the same condition.
"""

import math

import numpy as np
import pytest

from ricci_diameter import cli
from ricci_diameter.audit import lower_bound_series
from ricci_diameter.constants import f_entropy_infimum, kappa0, yamabe_upper
from ricci_diameter.distance import solve_distance
from ricci_diameter.geometry import round_profile

pytestmark = pytest.mark.slow

THEOREM_TRUE = ("qkappa", "m2_threshold", "mass_bound", "vol_upper", "vol_lower", "rminus_decay")


def great_circle(s0, s, alpha):
    c = np.cos(s0) * np.cos(s) + np.sin(s0) * np.sin(s) * np.cos(alpha)
    return np.arccos(np.clip(c, -1.0, 1.0))


def test_criterion_1_shrinking_sphere(suite_timed, record_criterion):
    res, seconds = suite_timed["round_s3"]
    traj = res.trajectory
    d = traj.diagnostics
    t_snap = traj.times
    idx = np.searchsorted(d["t"], t_snap)
    tau = 1.0 - 4.0 * t_snap
    err_R = np.max(np.abs(d["sup_R"][idx] / (6.0 / tau) - 1.0))
    err_L = np.max(np.abs(np.array([p.length for p in traj.states]) / (math.pi * np.sqrt(tau)) - 1.0))
    err_fmm = max(abs(a.diameter.diameter / (math.pi * math.sqrt(1 - 4 * a.t)) - 1.0) for a in res.analyses)
    err_V = np.max(np.abs(d["volume"][idx] / (2 * math.pi**2 * tau**1.5) - 1.0))
    ok = (
        traj.termination == "reached_T"
        and abs(t_snap[-1] - 0.2) < 1e-12
        and res.scenario.grid == 512
        and max(err_R, err_L, err_fmm, err_V) <= 1e-2
        and seconds <= 120.0
    )
    detail = (f"sup_R {err_R:.2e}, diam(L) {err_L:.2e}, diam(FMM) {err_fmm:.2e}, volume {err_V:.2e}; "
              f"{len(t_snap)} snapshots; full run {seconds:.1f}s")
    record_criterion(1, "shrinking-sphere oracle", ok, detail)
    assert ok, detail


def test_criterion_2_volume_identity(suite, record_criterion):
    worst, count, failed = 0.0, 0, 0
    for res in suite.values():
        d = res.trajectory.diagnostics
        rate = d["vol_rate"][:-1]
        scale = np.maximum(1.0, np.abs(d["int_R"][:-1]))
        if rate.size:
            worst = max(worst, float(np.max(np.abs(rate) / scale)))
        recs = res.records.get("vol_identity", [])
        count += len(recs)
        failed += sum(not r.passed for r in recs)
    ok = worst <= 1e-3 and failed == 0 and count > 0
    detail = f"max |dV/dt + int R| / max(1, |int R|) = {worst:.2e} over {count} steps"
    record_criterion(2, "volume identity at every step", ok, detail)
    assert ok, detail


def test_criterion_3_distance_oracle(record_criterion):
    rng = np.random.default_rng(20260101)
    worst = {}
    for n in (3, 4):
        prof = round_profile(n, 1.0, 256)
        errs = []
        for _ in range(100):
            f = solve_distance(prof, rng.uniform(0, math.pi), 256, 256)
            s, a = rng.uniform(0, math.pi), rng.uniform(0, math.pi)
            exact = great_circle(f.center_s, s, a)
            errs.append(abs(float(f.at(s, a)) / exact - 1.0))
        worst[n] = max(errs)
    pole = solve_distance(round_profile(3, 1.0, 256), 0.0, 256, 256)
    err_ball = abs(pole.ball_volume(math.pi / 2) / math.pi**2 - 1.0)
    ok = max(worst.values()) <= 1e-2 and err_ball <= 1e-2
    detail = f"max rel error S3 {worst[3]:.2e}, S4 {worst[4]:.2e}; ball(pi/2) {err_ball:.2e}"
    record_criterion(3, "fast marching vs great circles", ok, detail)
    assert ok, detail


def test_criterion_4_constants(sphere3, record_criterion):
    lam = f_entropy_infimum(sphere3)
    Y = yamabe_upper(sphere3)
    Y_exact = 6.0 * (2.0 * math.pi**2) ** (2.0 / 3.0)
    k = kappa0(1.0, 0.0, 3)
    ok = abs(lam - 6.0) <= 1e-3 and abs(Y / Y_exact - 1.0) <= 1e-2 and f"{k:.3e}" == f"{6.9054e-4:.3e}"
    detail = f"lambda_F {lam:.7f}, Y_sym {Y:.5f} (exact {Y_exact:.5f}), kappa0 {k:.5e}"
    record_criterion(4, "constants oracles", ok, detail)
    assert ok, detail


def test_criterion_5_theorem_true_audits(suite, record_criterion):
    counts = {k: [0, 0, 0] for k in THEOREM_TRUE}  # records, failed, hypothesis met
    for res in suite.values():
        for key in THEOREM_TRUE:
            rows = res.records.get(key, [])
            counts[key][0] += len(rows)
            counts[key][1] += sum(not r.passed for r in rows)
            counts[key][2] += sum(r.hypothesis_met for r in rows)
    failed = sum(c[1] for c in counts.values())
    ok = failed == 0 and all(counts[k][0] > 0 for k in THEOREM_TRUE)
    detail = ", ".join(f"{k} {c[1]}/{c[0]} failed" for k, c in counts.items())
    record_criterion(5, "theorem-true audits never fail", ok, detail)
    assert ok, detail


def test_criterion_6_lower_bound_sharpness(suite, record_criterion):
    ser = lower_bound_series(suite["round_s3"].trajectory)
    Q, t = ser["Q"], ser["t"]
    running_max = np.maximum.accumulate(Q)
    worst_drop = float(np.max(1.0 - Q / running_max))
    exact = math.pi * (1 - 4 * t) ** -0.5 / (2 * math.pi**2) ** (1 / 3)
    err = float(np.max(np.abs(Q / exact - 1.0)))
    c_fit = Q[0] / ser["factor"][0]
    violated = int(np.sum(Q < c_fit * ser["factor"] * (1 - 1e-2)))
    ok = worst_drop <= 1e-2 and err <= 1e-2 and violated == 0
    detail = f"largest relative drop {worst_drop:.2e}, closed-form error {err:.2e}, violations {violated}"
    record_criterion(6, "Q(t) nondecreasing on the shrinking sphere", ok, detail)
    assert ok, detail


def _fitted(res):
    return res.summary["fitted"]


def test_criterion_7_fit_stability(suite, refined_suite, record_criterion):
    c0 = max(_fitted(r)["C0_max"] for r in suite.values())
    c0_ref = max(_fitted(r)["C0_max"] for r in refined_suite.values())
    changes = {"C0 suite max": abs(c0_ref / c0 - 1.0)}
    for name, res in suite.items():
        changes[f"c_fit {name}"] = abs(_fitted(refined_suite[name])["c_fit"] / _fitted(res)["c_fit"] - 1.0)
    ok = max(changes.values()) <= 0.2
    detail = f"C0 {c0:.5g} -> {c0_ref:.5g}; " + ", ".join(f"{k} {v:.2%}" for k, v in changes.items())
    record_criterion(7, "fitted constants stable under grid doubling", ok, detail)
    assert ok, detail


def test_criterion_8_neckpinch(suite, record_criterion):
    traj = suite["dumbbell_s3"].trajectory
    d = traj.diagnostics
    ev = traj.event or {}
    diam_ratio = d["length"][-1] / d["length"][0]
    growth = d["sup_R"][-1] / d["sup_R"][0]
    ok = traj.termination == "singularity" and ev.get("kind") == "neckpinch" and 0.5 <= diam_ratio <= 1.5 and growth >= 1e3
    detail = f"{ev.get('kind')} at t={ev.get('time', float('nan')):.5g}, diameter ratio {diam_ratio:.3f}, sup_R growth {growth:.3g}"
    record_criterion(8, "dumbbell neckpinch", ok, detail)
    assert ok, detail


def test_criterion_9_determinism(tmp_path, config_dir, record_criterion):
    cfg = config_dir / "static_s3.json"
    blobs = []
    codes = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        codes.append(cli.main(["audit", "--config", str(cfg), "--out", str(out)]))
        blobs.append((out / "summary.json").read_bytes())
    ok = codes == [0, 0] and blobs[0] == blobs[1]
    detail = f"exit codes {codes}, {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}"
    record_criterion(9, "byte-identical summary JSON", ok, detail)
    assert ok, detail
