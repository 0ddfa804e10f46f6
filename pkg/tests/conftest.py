"""Shared fixtures: solvers and embedding contexts are expensive, so build them once."""

import logging

import numpy as np
import pytest

from polyembed.embedding import build_context
from polyembed.geometry import regular_polygon
from polyembed.solver import DEFAULT_DOFS, MFSSolver

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_polyembed_logs(caplog):
    caplog.set_level(logging.ERROR, logger="polyembed")


@pytest.fixture(scope="session")
def square():
    return regular_polygon(4)


@pytest.fixture(scope="session")
def hexagon():
    return regular_polygon(6)


@pytest.fixture(scope="session")
def square_solver(square):
    return MFSSolver(square, 1.0, DEFAULT_DOFS)


@pytest.fixture(scope="session")
def square_ref_solver(square):
    """Twice the default resolution; the reference for cross-validation."""
    return MFSSolver(square, 1.0, 2 * DEFAULT_DOFS)


@pytest.fixture(scope="session")
def square_ctx(square, square_solver):
    return build_context(square, 1.0, solver=square_solver)


@pytest.fixture(scope="session")
def hexagon_solver(hexagon):
    return MFSSolver(hexagon, 1.0, DEFAULT_DOFS)


@pytest.fixture(scope="session")
def hexagon_ctx(hexagon, hexagon_solver):
    return build_context(hexagon, 1.0, solver=hexagon_solver)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
