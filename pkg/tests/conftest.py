import numpy as np
import pytest

from psqi.signal_core import Signal

FS = 250.0


def pulse_train(fs=FS, duration=10.0, rate_hz=1.0, amplitudes=None, sigma=0.010, first=0.5):
    """Gaussian bumps at ``first + k / rate_hz``; returns (samples, centres in samples)."""
    t = np.arange(int(round(duration * fs))) / fs
    centres = np.arange(first, duration, 1.0 / rate_hz)
    if amplitudes is None:
        amplitudes = np.ones(centres.size)
    x = np.zeros_like(t)
    for a, c in zip(amplitudes, centres):
        x += a * np.exp(-0.5 * ((t - c) / sigma) ** 2)
    return x, np.round(centres * fs).astype(int)


@pytest.fixture
def clean_train():
    x, centres = pulse_train()
    return Signal(x, FS), centres


@pytest.fixture
def weak_train():
    amps = np.ones(10)
    amps[5] = 0.25
    x, centres = pulse_train(amplitudes=amps)
    return Signal(x, FS), centres


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, ok, detail):
        lines.append((number, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
