import csv
import json

import pytest

from ricci_diameter import cli
from ricci_diameter.audit import AUDIT_IDS
from ricci_diameter.geometry import round_profile, write_profile_csv
from ricci_diameter.scenario import (
    AUDIT_COLUMNS,
    HEAT_COLUMNS,
    TRAJECTORY_COLUMNS,
    Scenario,
    ScenarioError,
    load_scenario,
    save_scenario,
    write_audit_csv,
)

SMALL = {
    "name": "tiny",
    "n": 3,
    "profile": {"kind": "round", "radius": 1.0},
    "grid": 64,
    "t_end": 0.02,
    "snapshot_every": 0.01,
    "audit": {"centers": 2, "radii": 2, "n_s": 64, "n_alpha": 32, "diameter_samples": 2, "snapshots": 2},
    "heat": {"enabled": True, "l": 0.0, "fit_radius": 0.3},
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_load_suite_configs(config_dir):
    for path in sorted(config_dir.glob("*.json")):
        sc = load_scenario(path)
        assert sc.n >= 3 and sc.grid >= 64


def test_round_trip(tmp_path, config_dir):
    for path in sorted(config_dir.glob("*.json")):
        sc = load_scenario(path)
        assert Scenario.from_dict(sc.to_dict()) == sc
        save_scenario(sc, tmp_path / "rt.json")
        assert load_scenario(tmp_path / "rt.json") == sc


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"n": 2}, "n >= 3"),
        ({"grid": 32}, "grid"),
        ({"t_end": -1.0}, "t_end"),
        ({"snapshot_every": 1.0}, "snapshot_every"),
        ({"bogus": 1}, "bogus"),
        ({"audit": {"centers": 2, "colour": 1}}, "colour"),
        ({"profile": {"kind": "round", "radius": 1.0, "depth": 2}}, "depth"),
        ({"constants_strategy": "sharp"}, "constants_strategy"),
    ],
)
def test_invalid_scenarios(patch, field):
    with pytest.raises(ScenarioError, match=field):
        Scenario.from_dict(dict(SMALL, **patch))


def test_missing_t_end():
    data = dict(SMALL)
    del data["t_end"]
    with pytest.raises(ScenarioError, match="t_end"):
        Scenario.from_dict(data)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "name": "x",\n  "n": 3,,\n}')
    with pytest.raises(ScenarioError, match="line 3"):
        load_scenario(path)


def test_empty_record_stream_writes_header(tmp_path):
    path = tmp_path / "empty.csv"
    write_audit_csv([], path)
    assert path.read_text() == ",".join(AUDIT_COLUMNS) + "\n"


def test_cli_config_errors(tmp_path):
    assert cli.main(["simulate", "--config", str(write_config(tmp_path, dict(SMALL, n=2)))]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_cli_simulate(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(write_config(tmp_path, SMALL)), "--out", str(out)]) == cli.EXIT_OK
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) > 2
    assert (out / "snapshots" / "snapshot_0000.csv").exists()
    assert not (out / "audit").exists()


def test_cli_grid_override(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, SMALL)
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--grid", "96"]) == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["grid"] == 96


def test_cli_report_artifacts(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["report", "--config", str(write_config(tmp_path, SMALL)), "--out", str(out)]) == cli.EXIT_OK
    for key in AUDIT_IDS:
        if key in ("mass_bound",):
            continue
        with open(out / "audit" / f"{key}.csv") as fh:
            assert tuple(next(csv.reader(fh))) == AUDIT_COLUMNS
    with open(out / "heat" / "heat_mass.csv") as fh:
        assert tuple(next(csv.reader(fh))) == HEAT_COLUMNS
    fit = json.loads((out / "heat" / "heat_fit.json").read_text())
    assert {"c1_fit", "c2_fit", "r", "l"} <= set(fit)
    consts = json.loads((out / "constants" / "constants_0000.json").read_text())
    assert set(consts) == {"t", "A", "B", "Y_sym", "lambda_F", "kappa0", "strategy", "probe_margin_min"}
    for fig in ("trajectory.svg", "margins.svg", "heat_mass.svg"):
        text = (out / "figures" / fig).read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text
    summary = json.loads((out / "summary.json").read_text())
    assert summary["theorem_true_failures"] == 0


def test_cli_singular_exit(tmp_path):
    data = dict(SMALL, t_end=0.3, snapshot_every=0.05)
    out = tmp_path / "out"
    assert cli.main(["heatmass", "--config", str(write_config(tmp_path, data)), "--out", str(out)]) == cli.EXIT_SINGULAR
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] == "singularity"
    assert summary["event"]["kind"] == "global_shrink"
    assert (out / "heat" / "heat_mass.csv").exists()


def test_cli_numerical_error(tmp_path):
    prof = round_profile(3, 1.0, 64)
    warp = prof.warp.copy()
    warp[10] = -0.1
    bad = type(prof)(3, prof.grid, warp)
    write_profile_csv(bad, tmp_path / "bad.csv")
    data = dict(SMALL, profile={"kind": "explicit", "path": "bad.csv"})
    assert cli.main(["simulate", "--config", str(write_config(tmp_path, data))] + ["--out", str(tmp_path / "o")]) == cli.EXIT_NUMERICAL


def test_explicit_profile_relative_path(tmp_path):
    write_profile_csv(round_profile(3, 1.0, 100), tmp_path / "p.csv")
    data = dict(SMALL, profile={"kind": "explicit", "path": "p.csv"})
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(write_config(tmp_path, data)), "--out", str(out)]) == cli.EXIT_OK


def test_cli_determinism(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["audit", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
