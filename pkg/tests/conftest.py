import numpy as np
import pytest

from ripgate.params import DeviceParams, derive_params


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.fixture(scope="session")
def low():
    return DeviceParams.preset("low")


@pytest.fixture(scope="session")
def high():
    return DeviceParams.preset("high")


@pytest.fixture(scope="session")
def low10(low):
    """Low-frequency device driven 10 MHz above the bus."""
    return derive_params(low, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# -- acceptance bookkeeping --------------------------------------------------
# each acceptance test records its checks under a criterion number; the
# terminal summary prints one PASS/FAIL line per criterion

ACCEPTANCE = {}


class Criterion:
    def __init__(self, number):
        self.number = number
        self.failed = []

    def __call__(self, label, ok, detail=""):
        ok = bool(ok)
        ACCEPTANCE.setdefault(self.number, []).append((label, ok, detail))
        if not ok:
            self.failed.append(f"{label} ({detail})" if detail else label)
        return ok

    def conclude(self):
        assert not self.failed, f"C{self.number}: " + "; ".join(self.failed)


@pytest.fixture
def criterion():
    return Criterion


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call" or call.excinfo is None:
        return
    # failed assertions are already recorded by Criterion; anything else is a crash
    if item.get_closest_marker("xfail") is None and not call.excinfo.errisinstance(AssertionError):
        ACCEPTANCE.setdefault(marker.args[0], []).append((item.name, False, call.excinfo.typename))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        failed = [f"{label}: {detail}" if detail else label for label, ok, detail in checks if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"C{number} {status} ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += " failed: " + "; ".join(failed)
        terminalreporter.write_line(line)
