import csv
import math

import numpy as np
import pytest

from ricci_diameter.distance import (
    DistanceError,
    diameter,
    maximal_M2,
    m2_radii,
    solve_distance,
    volume_ratio_kappa,
)
from ricci_diameter.geometry import Profile, ball_volume_euclidean, dumbbell_profile, round_profile, volume


def great_circle(s0, s, alpha):
    c = np.cos(s0) * np.cos(s) + np.sin(s0) * np.sin(s) * np.cos(alpha)
    return np.arccos(np.clip(c, -1.0, 1.0))


@pytest.fixture(scope="module")
def s3_256():
    return round_profile(3, 1.0, 256)


@pytest.fixture(scope="module")
def pole_field(s3_256):
    return solve_distance(s3_256, 0.0, 256, 256)


def test_pole_distance_is_arclength(pole_field):
    d = pole_field.dist
    s = pole_field.profile.grid
    assert np.max(np.abs(d - s[:, None])) <= 1e-10
    assert np.max(d.max(axis=1) - d.min(axis=1)) <= 1e-9


@pytest.mark.parametrize("alpha, expected", [(math.pi, math.pi), (math.pi / 2, math.pi / 2)])
def test_equator_examples(s3_256, alpha, expected):
    f = solve_distance(s3_256, math.pi / 2, 256, 256)
    assert float(f.at(math.pi / 2, alpha)) == pytest.approx(expected, rel=1e-2)


@pytest.mark.parametrize("n", [3, 4])
def test_great_circle_oracle(n):
    rng = np.random.default_rng(7 + n)
    prof = round_profile(n, 1.0, 256)
    worst = 0.0
    for s0 in rng.uniform(0, math.pi, 10):
        f = solve_distance(prof, s0, 256, 256)
        s = rng.uniform(0, math.pi, 10)
        a = rng.uniform(0, math.pi, 10)
        exact = great_circle(f.center_s, s, a)
        keep = exact > 1e-6
        worst = max(worst, float(np.max(np.abs(f.at(s, a)[keep] / exact[keep] - 1.0))))
    assert worst <= 1e-2


def test_field_invariants(s3_256):
    f = solve_distance(s3_256, 1.1, 128, 256)
    assert f.dist[f.center_index, 0] == 0.0
    assert np.all(f.dist >= 0)
    assert f.max_dist <= s3_256.length + math.pi * s3_256.warp.max()


def test_ball_volume_at_pole(pole_field):
    r = math.pi / 2
    assert pole_field.ball_volume(r) == pytest.approx(math.pi**2, rel=1e-2)
    exact = 2 * math.pi * (r - math.sin(r) * math.cos(r))
    assert pole_field.ball_volume(r) == pytest.approx(exact, rel=1e-2)


def test_ball_covers_manifold(pole_field):
    V = volume(pole_field.profile)
    assert pole_field.ball_volume(10.0) == V
    assert pole_field.ball_covers_manifold(10.0)
    assert not pole_field.ball_covers_manifold(1.0)
    assert volume_ratio_kappa(pole_field.profile, pole_field, 10.0) == V / 10.0**3


def test_ball_volume_rejects_nonpositive(pole_field):
    with pytest.raises(ValueError):
        pole_field.ball_volume(0.0)


def test_ball_volume_monotone(s3_256):
    f = solve_distance(s3_256, 0.8, 128, 256)
    r = np.linspace(1e-3, f.max_dist * 1.01, 400)
    assert np.all(np.diff(f.ball_volume(r)) >= 0)


def test_small_ball_euclidean_limit(pole_field):
    r = 4 * float(np.diff(pole_field.profile.grid).max())
    ratio = pole_field.ball_volume(r) / (ball_volume_euclidean(3) * r**3)
    assert ratio == pytest.approx(1.0, rel=5e-2)


def test_volume_ratio_kappa(pole_field):
    assert volume_ratio_kappa(pole_field.profile, pole_field, math.pi / 2) == pytest.approx(8 / math.pi, rel=2e-2)


def test_m2_constant_curvature(s3_256):
    for c in (0.0, 1.0, math.pi / 2):
        f = solve_distance(s3_256, c, 128, 256)
        assert maximal_M2(s3_256, f, 1.0) == pytest.approx(6.0, rel=2e-2)


def test_m2_sampling_refinement(s3_256):
    f = solve_distance(s3_256, 1.0, 128, 256)
    a, b = maximal_M2(s3_256, f, 1.0, 32), maximal_M2(s3_256, f, 1.0, 64)
    assert b == pytest.approx(a, rel=1e-2)


def test_m2_monotone_in_radius():
    prof = dumbbell_profile(3, m=512)
    f = solve_distance(prof, 1.0, 128, 256)
    vals = [maximal_M2(prof, f, r) for r in np.geomspace(0.05, 2.0, 12)]
    assert np.all(np.diff(vals) >= 0)


def test_m2_radii_include_r(pole_field):
    rho = m2_radii(pole_field, 0.7)
    assert rho[-1] == 0.7 and rho.size >= 32 and np.all(np.diff(rho) > 0)


def test_m2_vanishes_without_positive_curvature():
    # the blend between cap and neck has R < 0 on s in about [2.42, 2.83]
    prof = dumbbell_profile(3, m=1024)
    f = solve_distance(prof, 2.62, 128, 1024)
    assert maximal_M2(prof, f, 0.1) == 0.0


def test_diameter_examples():
    assert diameter(round_profile(3, 1.0, 256)).diameter == pytest.approx(math.pi, rel=1e-2)
    r = math.sqrt(1 - 4 * 0.1)
    assert diameter(round_profile(3, r, 256)).diameter == pytest.approx(math.pi * r, rel=1e-2)


def test_diameter_dumbbell_is_meridian_length():
    prof = dumbbell_profile(3, m=512)
    res = diameter(prof)
    assert res.diameter == pytest.approx(prof.length, rel=1e-9)
    assert res.center_s == 0.0


def test_diameter_scaling():
    prof = dumbbell_profile(3, m=256)
    assert diameter(prof.scaled(2.5)).diameter == pytest.approx(2.5 * diameter(prof).diameter, rel=1e-9)


def test_write_csv(tmp_path):
    f = solve_distance(round_profile(3, 1.0, 64), 0.0, 16, 64)
    path = tmp_path / "d.csv"
    f.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "alpha", "dist"]
    assert len(rows) == 1 + 65 * 17


def test_center_out_of_range(s3_256):
    with pytest.raises(ValueError):
        solve_distance(s3_256, -0.1)


def test_degenerate_metric_reports_location():
    s = np.linspace(0.0, math.pi, 129)
    phi = np.sin(s)
    phi[-1] = 0.0
    phi[64] = np.nan
    with pytest.raises(DistanceError, match="s="):
        solve_distance(Profile(3, s, phi), 0.0, 32, None)
