import numpy as np
import pytest

from cutbernoulli.analysis import exact_circle_geometry
from cutbernoulli.mesh import build_background_mesh


@pytest.fixture(scope="session")
def mesh16():
    return build_background_mesh(16)


@pytest.fixture(scope="session")
def mesh32():
    return build_background_mesh(32)


@pytest.fixture(scope="session")
def mesh64():
    return build_background_mesh(64)


@pytest.fixture(scope="session")
def annulus32(mesh32):
    return exact_circle_geometry(mesh32)


@pytest.fixture(scope="session")
def annulus64(mesh64):
    return exact_circle_geometry(mesh64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion at the end of the run

_REPORT = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    lines = request.config.stash.setdefault(_REPORT, [])

    def record(number: int, title: str, ok: bool, detail: str, seconds: float) -> bool:
        lines.append((number, f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}  [{seconds:.1f}s]"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
