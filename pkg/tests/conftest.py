import math

import numpy as np
import pytest

from helicoid.curve import CurveParams
from helicoid.forms import normalize_residue
from helicoid.periods import DEFAULT_BOX, default_seeds, newton
from helicoid import surface as surf

DRIVING = ("A3", "B2")

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, list[str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.setdefault(criterion, []).append(f"{'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        parts = ACCEPTANCE_LINES[n]
        ok = all(p.startswith("PASS") for p in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
        for p in parts:
            terminalreporter.write_line(f"    {p}")


@pytest.fixture(scope="session")
def solved():
    res = newton(default_seeds()[0], DRIVING, DEFAULT_BOX, 1e-12)
    return res


@pytest.fixture(scope="session")
def solved_params(solved):
    return CurveParams(solved.a, solved.rho)


@pytest.fixture(scope="session")
def solved_data(solved_params):
    return normalize_residue(solved_params)


@pytest.fixture(scope="session")
def generic_params():
    return CurveParams(0.3, 1.2)


@pytest.fixture(scope="session")
def generic_data(generic_params):
    return normalize_residue(generic_params)


@pytest.fixture(scope="session")
def mesh(solved_data):
    return surf.build_mesh(solved_data, (41, 64))


@pytest.fixture(scope="session")
def fine_mesh(solved_data):
    return surf.build_mesh(solved_data, (81, 128))


@pytest.fixture(scope="session")
def finest_mesh(solved_data):
    return surf.build_mesh(solved_data, (161, 256))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_valid_params(rng, n):
    out = []
    while len(out) < n:
        a = rng.uniform(0.05, 0.95)
        rho = rng.uniform(0.15, math.pi - 0.15)
        out.append(CurveParams(a, rho))
    return out
