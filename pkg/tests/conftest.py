import numpy as np
import pytest

from galerkin_control.fixtures import cubic_circle, ebm_sphere, ebm_zonal, lq_circle


@pytest.fixture(scope="session")
def lq():
    return lq_circle()


@pytest.fixture(scope="session")
def lq_small():
    return lq_circle(n_intervals=20, dt=5e-3)


@pytest.fixture(scope="session")
def cubic():
    return cubic_circle()


@pytest.fixture(scope="session")
def ebm():
    return ebm_sphere()


@pytest.fixture(scope="session")
def ebm_z():
    return ebm_zonal()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; printed now and again in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
