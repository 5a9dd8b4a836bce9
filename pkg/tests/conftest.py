from __future__ import annotations

import time
from pathlib import Path

import pytest

from ricci_diameter.geometry import round_profile
from ricci_diameter.scenario import load_scenario, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SUITE = ("round_s3", "round_s4", "dumbbell_s3", "static_s3")

# criterion number -> (title, passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIGS


@pytest.fixture(scope="session")
def suite_timed():
    """Full runs (constants, audits, heat kernel) of the standard suite with wall-clock seconds."""
    out = {}
    for name in SUITE:
        t0 = time.perf_counter()
        res = run(load_scenario(CONFIGS / f"{name}.json"))
        out[name] = (res, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def suite(suite_timed):
    return {k: v[0] for k, v in suite_timed.items()}


@pytest.fixture(scope="session")
def refined_suite():
    """The suite with every grid dimension doubled (constants and audits only)."""
    return {name: run(load_scenario(CONFIGS / f"{name}.json").refined(2), ("constants", "audit")) for name in SUITE}


@pytest.fixture(scope="session")
def sphere3():
    return round_profile(3, 1.0, 512)


@pytest.fixture(scope="session")
def sphere4():
    return round_profile(4, 1.0, 512)


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE[number] = (title, bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
