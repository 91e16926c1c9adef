"""Shared fixtures: small grids and operator sets cached per session."""

from __future__ import annotations

import numpy as np
import pytest

from londonlimit.geometry import build_surface, sample_grid
from londonlimit.layer_potentials import assemble_operators


@pytest.fixture(scope="session")
def sphere_grid():
    return sample_grid(build_surface("sphere", radius=1.0), 24, 24)


@pytest.fixture(scope="session")
def sphere_ops(sphere_grid):
    return assemble_operators(sphere_grid)


@pytest.fixture(scope="session")
def torus_grid():
    return sample_grid(build_surface("torus_rev", R=2.0, r=1.0), 24, 24)


@pytest.fixture(scope="session")
def torus_ops(torus_grid):
    return assemble_operators(torus_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance lines collected by tests/test_acceptance.py and echoed at the end.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
