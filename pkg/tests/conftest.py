import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fsq.engine import resolve
from fsq.lang import load_query
from fsq.phantom import PhantomSpec, generate
from fsq.scene import load_scene

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    generate(PhantomSpec(), out)
    return out


@pytest.fixture(scope="session")
def phantom_query(phantom_dir):
    scene = load_scene(phantom_dir / "phantom.scene")
    return resolve(load_query(phantom_dir / "phantom.fq"), scene)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, printed in the summary."""
    lines = []

    def report(number, ok, detail):
        lines.append(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {detail}")
        return ok

    yield report
    for line in lines:
        print(line)
        ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
