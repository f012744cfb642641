import numpy as np
import pytest

from ddemgm.harness.io import Dataset


def periodic_class_series(rng, cls, length=None, noise=0.05):
    """Noisy sinusoid; class sets period and amplitude, phase/offset random."""
    period, amp = [(40.0, 1.0), (25.0, 1.6)][cls]
    L = int(rng.integers(300, 3001)) if length is None else length
    t = np.arange(L)
    y = amp * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    return y + rng.normal(0, noise, L) + rng.uniform(-5, 5)


def two_class_dataset(n_series, seed=0, length=None):
    rng = np.random.default_rng(seed)
    ds = Dataset()
    for i in range(n_series):
        cls = i % 2
        ds.add(f"s{i}", f"c{cls}", periodic_class_series(rng, cls, length))
    return ds


def gait_stream(N, rng, noise=0.02):
    """3-axis accelerometer-like walk: jittered stride, harmonics, heel strikes."""
    periods = rng.normal(100, 3, N // 80 + 2)
    knots = np.concatenate([[0], np.cumsum(periods)])
    phase = np.interp(np.arange(N), knots, np.arange(len(knots))) * 2 * np.pi
    base = np.stack([
        np.sin(phase) + 0.3 * np.sin(2 * phase + 0.5),
        0.8 * np.cos(phase) + 0.2 * np.sin(3 * phase),
        0.4 * np.sin(phase + 1.0),
    ], axis=1)
    frac = (phase / (2 * np.pi)) % 1.0
    impact = np.exp(-0.5 * ((frac - 0.1) * 50) ** 2)[:, None] * np.array([2.5, -1.5, 3.0])
    return base + impact + rng.normal(0, noise, (N, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one line per criterion --------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        measured = dict(report.user_properties).get("measured", "")
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        status, measured = _CRITERIA[name]
        number = int(name.split("_")[2])
        title = name.split("_", 3)[3].replace("_", " ")
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}  {measured}".rstrip())
