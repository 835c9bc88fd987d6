"""Downstream algorithms scored by the pSQI.

Two R-peak detectors are built in (the second exists for the
detector-agreement feature) plus an adapter that runs any external binary
classifier as a child process.
"""
from __future__ import annotations

import os
import subprocess
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable

import numpy as np
from scipy.ndimage import maximum_filter1d, percentile_filter
from scipy.signal import find_peaks

from .errors import ClassifierFailure, UnsupportedSignalError
from .metrics import binary_accuracy, peak_f1
from .signal_core import Signal, cached_design, zero_phase

MIN_DETECTOR_FS = 50.0
MIN_DETECTOR_DURATION_S = 2.0
DEFAULT_CLASSIFIER_TIMEOUT_S = 30.0


@dataclass(frozen=True, eq=False)
class PeakList:
    indices: np.ndarray
    fs: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise ValueError("peak indices must be nonnegative and strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PeakList)
            and self.fs == other.fs
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.fs, self.indices.tobytes()))


@dataclass(frozen=True)
class BinaryLabel:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError(f"binary label must be 0 or 1, got {self.value!r}")


@dataclass(frozen=True)
class TaskBinding:
    """An algorithm ``f`` together with the metric ``h`` used to compare its outputs."""

    algorithm: Callable[[Signal], Any]
    metric: Callable[[Any, Any], float]
    output_kind: str

    def __post_init__(self):
        if self.output_kind not in ("peaks", "binary"):
            raise ValueError(f"unknown output kind {self.output_kind!r}")


def _check_detector_input(x: Signal) -> None:
    if x.fs < MIN_DETECTOR_FS:
        raise UnsupportedSignalError(f"detector needs fs >= {MIN_DETECTOR_FS} Hz, got {x.fs}")
    if x.duration < MIN_DETECTOR_DURATION_S:
        raise UnsupportedSignalError(
            f"detector needs >= {MIN_DETECTOR_DURATION_S} s of signal, got {x.duration:.3f} s"
        )


def _refine_and_space(candidates, bp: np.ndarray, fs: float, half_window_s: float, refractory: int):
    """Move each detection to the bandpassed maximum nearby, then enforce the refractory gap."""
    half = max(1, int(round(half_window_s * fs)))
    refined = []
    for i in candidates:
        lo, hi = max(0, i - half), min(bp.size, i + half + 1)
        refined.append(lo + int(np.argmax(bp[lo:hi])))
    kept: list[int] = []
    for i in sorted(set(refined)):
        if kept and i - kept[-1] < refractory:
            if bp[i] > bp[kept[-1]]:
                kept[-1] = i
            continue
        kept.append(i)
    return kept


def detect_rpeaks_reference(x: Signal) -> PeakList:
    """Offline Pan-Tompkins style detector.

    Bandpass 5-15 Hz, derivative, squaring and a 150 ms moving-window
    integral, followed by adaptive signal/noise thresholds with searchback
    and a 200 ms refractory period. Thresholds start from the first 2 s, or
    the whole window when that segment is flat.
    """
    _check_detector_input(x)
    fs = x.fs
    bp = zero_phase(cached_design(3, "bandpass", (5.0, 15.0), fs), x.samples)
    energy = np.gradient(bp) ** 2
    width = max(1, int(round(0.150 * fs)))
    mwi = np.convolve(energy, np.ones(width) / width, mode="same")
    peak_level = mwi.max()
    if not peak_level > 0:
        return PeakList(np.zeros(0, dtype=np.int64), fs)

    refractory = int(round(0.200 * fs))
    candidates, _ = find_peaks(mwi, distance=refractory)
    if candidates.size == 0:
        return PeakList(np.zeros(0, dtype=np.int64), fs)

    head = mwi[: int(round(2.0 * fs))]
    if head.max() <= 1e-6 * peak_level:
        head = mwi
    spki = head.max() / 3.0
    npki = head.mean() / 2.0

    beats: list[int] = []
    noise_peaks: list[int] = []
    rr: list[int] = []

    def accept(i: int, searchback: bool) -> None:
        nonlocal spki
        v = mwi[i]
        spki = (0.25 * v + 0.75 * spki) if searchback else (0.125 * v + 0.875 * spki)
        if beats:
            rr.append(i - beats[-1])
            del rr[:-8]
        beats.append(i)

    for i in candidates:
        i = int(i)
        thr1 = npki + 0.25 * (spki - npki)
        if beats and rr:
            rr_avg = float(np.mean(rr))
            if i - beats[-1] > 1.66 * rr_avg:
                thr2 = 0.5 * thr1
                pool = [j for j in noise_peaks if j > beats[-1] + refractory and j < i - refractory]
                if pool:
                    j = max(pool, key=lambda k: mwi[k])
                    if mwi[j] > thr2:
                        noise_peaks.remove(j)
                        accept(j, searchback=True)
                        thr1 = npki + 0.25 * (spki - npki)
        if mwi[i] > thr1 and (not beats or i - beats[-1] >= refractory):
            accept(i, searchback=False)
        else:
            npki = 0.125 * mwi[i] + 0.875 * npki
            noise_peaks.append(i)

    kept = _refine_and_space(beats, bp, fs, 0.050, refractory)
    return PeakList(np.asarray(kept, dtype=np.int64), fs)


ALTERNATE_RELATIVE_GATE = 0.1


def detect_rpeaks_alternate(x: Signal) -> PeakList:
    """Percentile-threshold detector on the squared 8-20 Hz bandpassed signal.

    A local maximum counts when it exceeds the rolling 2 s 90th percentile
    and a tenth of the rolling 2 s maximum; detections are at least 250 ms
    apart.
    """
    _check_detector_input(x)
    fs = x.fs
    bp = zero_phase(cached_design(3, "bandpass", (8.0, 20.0), fs), x.samples)
    energy = bp**2
    if not energy.max() > 0:
        return PeakList(np.zeros(0, dtype=np.int64), fs)
    span = max(3, int(round(2.0 * fs)))
    threshold = np.maximum(
        percentile_filter(energy, 90, size=span, mode="reflect"),
        ALTERNATE_RELATIVE_GATE * maximum_filter1d(energy, size=span, mode="reflect"),
    )
    refractory = int(round(0.250 * fs))
    candidates, _ = find_peaks(energy, distance=refractory)
    picked = [int(i) for i in candidates if energy[i] > threshold[i]]
    return PeakList(np.asarray(picked, dtype=np.int64), fs)


# --- external classifiers ----------------------------------------------------


@dataclass(frozen=True)
class ExternalCommandSpec:
    argv: tuple
    timeout_s: float = DEFAULT_CLASSIFIER_TIMEOUT_S
    env: dict = field(default_factory=dict)

    def __post_init__(self):
        argv = (self.argv,) if isinstance(self.argv, str) else tuple(self.argv)
        if not argv:
            raise ValueError("external command must not be empty")
        object.__setattr__(self, "argv", argv)

    def effective_timeout(self) -> float:
        override = os.environ.get("PSQI_TIMEOUT_S")
        return float(override) if override else float(self.timeout_s)


def serialize_window(x: Signal) -> str:
    lines = [f"fs={x.fs!r}"]
    lines.extend(repr(float(v)) for v in x.samples)
    return "\n".join(lines) + "\n"


def external_classifier(spec: ExternalCommandSpec, x: Signal) -> BinaryLabel:
    """Send the window to a child process and read back a 0/1 label."""
    timeout = spec.effective_timeout()
    env = {**os.environ, **spec.env} if spec.env else None
    try:
        proc = subprocess.run(
            list(spec.argv),
            input=serialize_window(x),
            capture_output=True,
            text=True,
            timeout=timeout,
            env=env,
        )
    except subprocess.TimeoutExpired as exc:
        raise ClassifierFailure(
            f"classifier timed out after {timeout} s",
            stdout=exc.stdout or "",
            stderr=exc.stderr or "",
        ) from exc
    except OSError as exc:
        raise ClassifierFailure(f"could not start classifier {spec.argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ClassifierFailure(
            f"classifier exited with status {proc.returncode}",
            returncode=proc.returncode,
            stdout=proc.stdout,
            stderr=proc.stderr,
        )
    out = proc.stdout.replace("\r\n", "\n")
    if out not in ("0\n", "1\n"):
        raise ClassifierFailure(
            f"classifier printed {proc.stdout!r}, expected '0' or '1' and a newline",
            returncode=proc.returncode,
            stdout=proc.stdout,
            stderr=proc.stderr,
        )
    return BinaryLabel(int(out[0]))


RPEAK_TASK = TaskBinding(detect_rpeaks_reference, peak_f1, "peaks")


def external_task(spec: ExternalCommandSpec) -> TaskBinding:
    return TaskBinding(partial(external_classifier, spec), binary_accuracy, "binary")
