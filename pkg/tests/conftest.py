"""Shared fixtures: full experiment runs are expensive, so each runs once per session."""

from __future__ import annotations

import pytest

from hptsi.experiments import ExperimentConfig, run

# (criterion, passed, detail) lines collected by the acceptance suite
CRITERIA: list = []


def record(name: str, passed: bool, detail: str = "") -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


def _run(tmp_path_factory, name, **overrides):
    out = tmp_path_factory.mktemp(name)
    return run(ExperimentConfig.for_experiment(name, output_dir=str(out), **overrides))


@pytest.fixture(scope="session")
def two_shocks_fine(tmp_path_factory):
    return _run(tmp_path_factory, "two_shocks", quadrature_mode="fine")


@pytest.fixture(scope="session")
def two_shocks_coarse(tmp_path_factory):
    return _run(tmp_path_factory, "two_shocks", quadrature_mode="coarse")


@pytest.fixture(scope="session")
def shock_rwave(tmp_path_factory):
    return _run(tmp_path_factory, "shock_rwave")


@pytest.fixture(scope="session")
def rate_study(tmp_path_factory):
    return _run(tmp_path_factory, "rate_study")


@pytest.fixture(scope="session")
def nwidth(tmp_path_factory):
    return _run(tmp_path_factory, "nwidth_demo")
