import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psqi.metrics import binary_accuracy, f1_score, match_peaks, peak_f1, tolerance_samples, MatchResult
from psqi.tasks import BinaryLabel, PeakList


def brute_force_tp(ref, det, tol):
    """Maximum one-to-one matching by trying every injection of references into detections."""
    best = 0
    slots = list(range(len(det))) + [None] * len(ref)
    for assign in itertools.permutations(slots, len(ref)):
        used = [a for a in assign if a is not None]
        if len(set(used)) != len(used):
            continue
        ok = all(a is None or abs(ref[i] - det[a]) <= tol for i, a in enumerate(assign))
        if ok:
            best = max(best, len(used))
    return best


def random_instance(rng, tol):
    n_ref = int(rng.integers(0, 5))
    n_det = int(rng.integers(0, 5))
    # reference spacing > 2*tol keeps tolerance windows disjoint
    gaps = rng.integers(2 * tol + 1, 6 * tol, size=n_ref)
    ref = (np.cumsum(gaps) + 50).tolist()
    hi = (ref[-1] if ref else 100) + 3 * tol
    det = sorted(set(rng.integers(0, hi, size=n_det).tolist()))
    return ref, det


@pytest.mark.parametrize(
    "ref, det, expected",
    [
        ([100, 350, 600], [100, 350, 600], (3, 0, 0)),
        ([100], [100, 150], (1, 1, 0)),
        ([100, 118], [109], (1, 0, 1)),
        ([], [], (0, 0, 0)),
        ([5], [], (0, 0, 1)),
        ([], [5], (0, 1, 0)),
    ],
)
def test_match_examples(ref, det, expected):
    m = match_peaks(ref, det, 0.020, 1000)
    assert (m.tp, m.fp, m.fn) == expected


def test_tie_rule_first_reference_wins():
    m = match_peaks([100, 118], [109], 0.020, 1000)
    assert m.matched_pairs == [(100, 109)]


@pytest.mark.parametrize(
    "tp, fp, fn, expected", [(3, 0, 0, 1.0), (1, 1, 0, 2 / 3), (0, 0, 0, 1.0), (0, 2, 3, 0.0)]
)
def test_f1_examples(tp, fp, fn, expected):
    assert f1_score(MatchResult(tp, fp, fn)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("pred, truth, expected", [(1, 1, 1.0), (0, 1, 0.0), (0, 0, 1.0), (1, 0, 0.0)])
def test_binary_accuracy(pred, truth, expected):
    assert binary_accuracy(BinaryLabel(pred), BinaryLabel(truth)) == expected


@pytest.mark.parametrize("tol_s, fs, expected", [(0.020, 250, 5), (0.020, 125, 3), (0.020, 360, 7), (0.002, 250, 1)])
def test_tolerance_rounds_half_away_from_zero(tol_s, fs, expected):
    assert tolerance_samples(tol_s, fs) == expected


def test_peak_f1_uses_reference_rate():
    ref = PeakList([250, 500, 750], 250.0)
    assert peak_f1(PeakList([254, 500, 745], 250.0), ref) == 1.0
    assert peak_f1(PeakList([256, 500, 750], 250.0), ref) == pytest.approx(2 / 3)


def test_greedy_equals_brute_force():
    rng = np.random.default_rng(2024)
    tol = 20
    for _ in range(500):
        ref, det = random_instance(rng, tol)
        assert match_peaks(ref, det, tol / 1000, 1000).tp == brute_force_tp(ref, det, tol)


peak_sets = st.lists(st.integers(0, 3000), max_size=12, unique=True).map(sorted)


@settings(max_examples=150)
@given(ref=peak_sets, det=peak_sets, extra=st.integers(0, 3000))
def test_adding_detection_is_monotone(ref, det, extra):
    before = match_peaks(ref, det, 0.020, 1000)
    assert before.tp <= min(len(ref), len(det))
    if extra in det:
        return
    after = match_peaks(ref, sorted(det + [extra]), 0.020, 1000)
    assert after.tp >= before.tp
    assert after.tp + after.fp >= before.tp + before.fp
    assert 0.0 <= f1_score(after) <= 1.0
