import math

import numpy as np
import pytest

from ricci_diameter import operators as ops
from ricci_diameter.flow import FlowControls, FlowTrajectory, evolve
from ricci_diameter.geometry import round_profile
from ricci_diameter.heat import (
    HeatError,
    HeatState,
    empirical_J,
    evolve_kernel,
    mass_bound,
    mass_series,
)


@pytest.fixture(scope="module")
def static_s3():
    return FlowTrajectory.static(round_profile(3, 1.0, 256))


@pytest.fixture(scope="module")
def shrinking():
    return {m: evolve(round_profile(3, 1.0, m), 0.2, FlowControls(snapshot_every=0.01)) for m in (128, 256)}


def test_static_mass_conserved(static_s3):
    states = evolve_kernel(static_s3, 0.0, t_end=2.0)
    masses = np.array([s.mass for s in states])
    assert masses[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(masses - 1.0)) <= 1e-3


def test_static_uniform_limit(static_s3):
    diam = static_s3.states[0].length
    states = evolve_kernel(static_s3, 0.0, t_end=2.0 * diam**2)
    V = float(ops.dual_weights(static_s3.states[0]).sum())
    u = states[-1].values
    assert np.max(np.abs(u * V - 1.0)) <= 1e-2


def test_north_pole_center(static_s3):
    states = evolve_kernel(static_s3, 0.0, center="north", t_end=0.1)
    assert states[0].values[-1] > 0 and states[0].values[0] == 0


def test_shrinking_mass_nonincreasing(shrinking):
    traj = shrinking[128]
    states = evolve_kernel(traj, 0.0)
    masses = np.array([s.mass for s in states])
    assert np.all(np.diff(masses) <= 1e-12)
    assert [s.t for s in states] == list(traj.times)


def test_shrinking_mass_matches_closed_form(shrinking):
    # d/dt int u = -int R u and R = 6/(1-4t) is constant in space
    states = evolve_kernel(shrinking[256], 0.0)
    for s in states:
        assert s.mass == pytest.approx((1 - 4 * s.t) ** 1.5, rel=1e-2)


def test_mass_series_bound(shrinking):
    traj = shrinking[128]
    recs = mass_series(evolve_kernel(traj, 0.0), traj)
    assert all(r.bound == 1.0 for r in recs)
    assert all(r.passed and r.mass <= 1 + 2e-3 for r in recs)
    assert recs[0].mass == pytest.approx(1.0, abs=1e-12)


def test_mass_bound_examples():
    assert mass_bound(3.0, 1.0, 3) == pytest.approx(3**1.5)
    assert mass_bound(3.0, 1.0, 3) == pytest.approx(5.196, abs=1e-3)
    assert mass_bound(0.0, 7.0, 4) == 1.0


def test_kernel_nonnegative(shrinking):
    for s in evolve_kernel(shrinking[128], 0.05):
        assert s.values.min() >= -1e-12


def test_cadence_too_coarse():
    traj = evolve(round_profile(3, 1.0, 64), 0.2, FlowControls(snapshot_every=0.1, snapshot_curvature=None))
    with pytest.raises(HeatError, match="need <="):
        evolve_kernel(traj, 0.0)


def test_invalid_arguments(static_s3, shrinking):
    with pytest.raises(ValueError):
        evolve_kernel(static_s3, 0.0)
    with pytest.raises(ValueError):
        evolve_kernel(shrinking[128], 0.5)
    with pytest.raises(ValueError):
        evolve_kernel(static_s3, 0.0, center="east", t_end=1.0)


def test_negative_state_rejected():
    with pytest.raises(HeatError):
        HeatState(0.0, np.array([1.0, -1e-6]), 1.0)


def test_static_short_time_fit(static_s3):
    states = evolve_kernel(static_s3, 0.0, t_end=0.05)
    fit = empirical_J(states, static_s3, 0.2)
    assert fit.fit and fit.c1_fit > 0 and fit.c2_fit >= 0


def test_fit_stable_across_resolutions(shrinking):
    fits = [empirical_J(evolve_kernel(shrinking[m], 0.05), shrinking[m], 0.3) for m in (128, 256)]
    assert all(f.fit for f in fits)
    assert fits[1].c1_fit == pytest.approx(fits[0].c1_fit, rel=0.3)
    assert fits[1].c2_fit == pytest.approx(fits[0].c2_fit, rel=0.3)


def test_fit_degenerates_for_tiny_radius(static_s3):
    states = evolve_kernel(static_s3, 0.0, t_end=0.05)
    fit = empirical_J(states, static_s3, 1e-3)
    assert not fit.fit
    assert math.isnan(fit.c1_fit)
    assert "degenerate" in fit.reason


def test_fit_json_keys(static_s3):
    fit = empirical_J(evolve_kernel(static_s3, 0.0, t_end=0.05), static_s3, 0.2)
    assert set(fit.to_json()) == {"c1_fit", "c2_fit", "r", "l"}
