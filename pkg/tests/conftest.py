import numpy as np
import pytest

from srdetect.detector import Thresholds
from srdetect.noise import NoiseModel


@pytest.fixture
def unit():
    return NoiseModel(1.0)


@pytest.fixture
def sym2():
    return Thresholds(-2.0, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""

    def emit(label: str, ok: bool, detail: str, seconds: float, limit: float):
        within = seconds < limit
        status = "PASS" if ok and within else "FAIL"
        line = f"[{status}] {label}: {detail} | runtime {seconds:.1f}s (limit {limit:g}s)"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok and within

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
