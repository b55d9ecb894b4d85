import random

import pytest

from pipeplan.core import Device, DevicePool, ModelProfile

_acceptance: dict[str, str] = {}


@pytest.fixture
def rng():
    return random.Random(20240611)


def identical_pool(n, speed=1.0, memory=10**12, bandwidth=1e15, latency=0.0, prefix="d"):
    devices = [Device(f"{prefix}{k}", "same", speed, memory) for k in range(n)]
    return DevicePool.uniform_links(devices, bandwidth, latency)


def uniform_model(n, base=1.0, out_bytes=1, memory=1, overhead=0.0):
    return ModelProfile.uniform(n, base, out_bytes, memory, overhead)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in sorted(_acceptance.items()):
        terminalreporter.write_line(f"{status:4}  {name}")
