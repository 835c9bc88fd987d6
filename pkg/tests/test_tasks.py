import sys

import numpy as np
import pytest

from conftest import FS, pulse_train
from psqi.errors import ClassifierFailure, UnsupportedSignalError
from psqi.metrics import peak_f1
from psqi.signal_core import Signal
from psqi.tasks import (
    BinaryLabel,
    ExternalCommandSpec,
    PeakList,
    RPEAK_TASK,
    detect_rpeaks_alternate,
    detect_rpeaks_reference,
    external_classifier,
    external_task,
    serialize_window,
)
from psqi.data import SynthSpec, synth_corpus

DETECTORS = [(detect_rpeaks_reference, 2, 0.200), (detect_rpeaks_alternate, 3, 0.250)]


def stub(code):
    return ExternalCommandSpec((sys.executable, "-c", code), timeout_s=20)


@pytest.mark.parametrize("detector, slack, _", DETECTORS)
def test_pulse_train_peaks(clean_train, detector, slack, _):
    x, centres = clean_train
    peaks = detector(x)
    assert len(peaks) == 10
    assert np.all(np.abs(peaks.indices - centres) <= slack)


@pytest.mark.parametrize("detector, _s, _r", DETECTORS)
def test_all_zero_input(detector, _s, _r):
    assert len(detector(Signal(np.zeros(2500), FS))) == 0


def test_noisy_train_f1():
    clean, centres = pulse_train()
    power = np.mean(clean**2)
    truth = PeakList(centres, FS)
    for seed in range(20):
        noise = np.random.default_rng(seed).standard_normal(clean.size) * np.sqrt(power / 10**3)
        assert peak_f1(detect_rpeaks_reference(Signal(clean + noise, FS)), truth) >= 0.95


def test_detectors_agree_on_clean_train(clean_train):
    x, _ = clean_train
    assert peak_f1(detect_rpeaks_alternate(x), detect_rpeaks_reference(x), 0.1) == 1.0


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(SynthSpec(n_windows=12), seed=5)


@pytest.mark.parametrize("detector, _, refractory_s", DETECTORS)
def test_refractory_and_scale_invariance(corpus, detector, _, refractory_s):
    for w in corpus:
        peaks = detector(w.signal)
        assert np.all(np.diff(peaks.indices) >= refractory_s * w.signal.fs - 1e-9)
        for c in (1e-3, 3.7, 1e4):
            assert detector(w.signal.replace(c * w.signal.samples)) == peaks
        assert detector(w.signal) == peaks


def test_detector_rejects_unsupported():
    with pytest.raises(UnsupportedSignalError):
        detect_rpeaks_reference(Signal(np.zeros(50), 250))
    with pytest.raises(UnsupportedSignalError):
        detect_rpeaks_alternate(Signal(np.zeros(500), 20))


def test_peaklist_validation():
    with pytest.raises(ValueError):
        PeakList([5, 3], 100)
    with pytest.raises(ValueError):
        BinaryLabel(2)


def test_binding_kind():
    assert RPEAK_TASK.output_kind == "peaks"
    assert external_task(stub("print(1)")).output_kind == "binary"


# --- external classifier -----------------------------------------------------


SHORT = Signal(np.arange(7, dtype=float), 100.0)


def test_serialization_round_trip():
    lines = serialize_window(SHORT).splitlines()
    assert lines[0] == "fs=100.0"
    assert [float(v) for v in lines[1:]] == SHORT.samples.tolist()


def test_stub_prints_one():
    assert external_classifier(stub("print(1)"), SHORT) == BinaryLabel(1)


def test_stub_protocol_violation():
    with pytest.raises(ClassifierFailure) as info:
        external_classifier(stub("print('yes')"), SHORT)
    assert "yes" in info.value.stdout


@pytest.mark.parametrize("n", [7, 8, 31])
def test_stub_parity_round_trip(n):
    code = "import sys; lines = sys.stdin.read().splitlines(); print((len(lines) - 1) % 2)"
    x = Signal(np.random.default_rng(n).standard_normal(n), 50.0)
    assert external_classifier(stub(code), x).value == n % 2


def test_stub_nonzero_exit():
    with pytest.raises(ClassifierFailure) as info:
        external_classifier(stub("import sys; sys.stderr.write('boom'); sys.exit(4)"), SHORT)
    assert info.value.returncode == 4
    assert "boom" in info.value.stderr


def test_stub_timeout(monkeypatch):
    monkeypatch.setenv("PSQI_TIMEOUT_S", "0.5")
    with pytest.raises(ClassifierFailure, match="timed out"):
        external_classifier(stub("import time; time.sleep(5)"), SHORT)


def test_missing_executable():
    with pytest.raises(ClassifierFailure):
        external_classifier(ExternalCommandSpec(("/nonexistent/classifier",)), SHORT)
