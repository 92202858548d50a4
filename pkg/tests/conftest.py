import numpy as np
import pytest

from kaonbohm.constants import HBAR, PION_MASS
from kaonbohm.packet import GaussianPacket
from kaonbohm.simulator import SimulatorSetup, generate_events


@pytest.fixture
def pion_packet():
    return GaussianPacket(0.0, 0.0, 1e-15, PION_MASS, 0.0, HBAR)


@pytest.fixture(scope="session")
def default_setup():
    return SimulatorSetup()


@pytest.fixture(scope="session")
def detected_events(default_setup):
    events, _ = generate_events(default_setup, 400, 7)
    return [e for e in events if e.detected]


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one acceptance criterion outcome; printed again in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
