"""Task metrics: tolerance-matched F1 for peak sets and binary accuracy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PEAK_TOLERANCE_S = 0.020


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    matched_pairs: list = field(default_factory=list)


def tolerance_samples(tolerance_s: float, fs: float) -> int:
    """Tolerance in samples, rounding half away from zero."""
    v = tolerance_s * fs
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def _indices(peaks) -> np.ndarray:
    return np.asarray(getattr(peaks, "indices", peaks), dtype=np.int64).ravel()


def match_peaks(reference, detected, tolerance_s: float, fs: float) -> MatchResult:
    """Greedy chronological one-to-one matching.

    References are visited in order; each takes the nearest still-unmatched
    detection within the tolerance (earlier detection on equal distance).
    """
    if tolerance_s < 0:
        raise ValueError("tolerance must be nonnegative")
    ref = np.sort(_indices(reference))
    det = np.sort(_indices(detected))
    tol = tolerance_samples(tolerance_s, fs)
    used = np.zeros(det.size, dtype=bool)
    pairs = []
    for r in ref:
        lo = np.searchsorted(det, r - tol, side="left")
        hi = np.searchsorted(det, r + tol, side="right")
        best, best_dist = -1, None
        for j in range(lo, hi):
            if used[j]:
                continue
            dist = abs(int(det[j]) - int(r))
            if best_dist is None or dist < best_dist:
                best, best_dist = j, dist
        if best >= 0:
            used[best] = True
            pairs.append((int(r), int(det[best])))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=int(det.size - tp), fn=int(ref.size - tp), matched_pairs=pairs)


def f1_score(m: MatchResult) -> float:
    denom = 2 * m.tp + m.fp + m.fn
    if denom == 0:
        return 1.0
    return 2.0 * m.tp / denom


def binary_accuracy(pred, truth) -> float:
    return 1.0 if int(getattr(pred, "value", pred)) == int(getattr(truth, "value", truth)) else 0.0


def peak_f1(predicted, reference, tolerance_s: float = PEAK_TOLERANCE_S) -> float:
    """F1 of ``predicted`` against ``reference``; both must carry ``fs``."""
    return f1_score(match_peaks(reference, predicted, tolerance_s, reference.fs))
