import numpy as np
import pytest

from polytopt.sdf import Box
from polytopt.voromesh import generate_cvt_mesh


@pytest.fixture(scope="session")
def unit_cube():
    return Box((0, 0, 0), (1, 1, 1))


@pytest.fixture(scope="session")
def cube_mesh_50(unit_cube):
    mesh, _ = generate_cvt_mesh(unit_cube, 50, lloyd_iters=20, random_state=0)
    return mesh


@pytest.fixture(scope="session")
def cube_mesh_200(unit_cube):
    mesh, _ = generate_cvt_mesh(unit_cube, 200, lloyd_iters=20, random_state=1)
    return mesh


@pytest.fixture(scope="session")
def beam_mesh_20():
    mesh, _ = generate_cvt_mesh(Box((0, 0, 0), (2, 1, 1)), 20, lloyd_iters=10, random_state=3)
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion."""
    def add(number, ok, text):
        status = "PASS" if ok is True else ("FAIL" if ok is False else ok)
        ACCEPTANCE_LINES.append(f"criterion {number}: {status}  {text}")
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
