"""Ricci flow on rotationally symmetric spheres with diameter-bound audits."""

from ricci_diameter.geometry import (
    GeometryReport,
    Profile,
    ProfileError,
    dumbbell_profile,
    geometry_report,
    lp_positive_curvature,
    round_profile,
    scalar_curvature,
    sup_norms,
    validate_profile,
    volume,
)
from ricci_diameter.flow import FlowControls, FlowTrajectory, evolve
from ricci_diameter.scenario import RunResult, Scenario, load_scenario, run

__all__ = [
    "FlowControls",
    "FlowTrajectory",
    "RunResult",
    "Scenario",
    "evolve",
    "load_scenario",
    "run",
    "GeometryReport",
    "Profile",
    "ProfileError",
    "dumbbell_profile",
    "geometry_report",
    "lp_positive_curvature",
    "round_profile",
    "scalar_curvature",
    "sup_norms",
    "validate_profile",
    "volume",
]

__version__ = "0.1.0"
