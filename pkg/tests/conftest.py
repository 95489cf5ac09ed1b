import numpy as np
import pytest

from gfanc.adaptive import FxlmsConfig, fxlms_run
from gfanc.filterbank import decompose
from gfanc.signal_core import Signal, acoustic_paths, white_noise

FS = 16000


@pytest.fixture(scope="session")
def paths():
    return acoustic_paths()


@pytest.fixture(scope="session")
def fxlms_30s(paths):
    """30 s of white noise through the default paths, FxLMS from zero: (x, e, w)."""
    p, s = paths
    x = Signal(white_noise(0, 30 * FS))
    e, w = fxlms_run(x, p, s, FxlmsConfig())
    return x, e, w


@pytest.fixture(scope="session")
def broadband(fxlms_30s):
    return fxlms_30s[2]


@pytest.fixture(scope="session")
def bank(broadband):
    return decompose(broadband, 15)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: dict[int, tuple[bool, str]] = {}
N_CRITERIA = 8


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records the verdict for the summary lines."""

    def record(k: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[k] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    ran = any("test_acceptance" in r.nodeid for reps in terminalreporter.stats.values() for r in reps if hasattr(r, "nodeid"))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(k, (False, "did not complete"))
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
