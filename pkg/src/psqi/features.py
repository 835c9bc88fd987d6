"""Hand-crafted quality features for training feature-based SQIs elsewhere.

Nothing here learns; features are extracted per window and written to a
table together with the realized metric.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.signal import welch
from scipy.stats import kurtosis, skew

from .errors import FileError, InvalidSignalError
from .metrics import match_peaks
from .signal_core import Signal
from .tasks import detect_rpeaks_alternate, detect_rpeaks_reference

MIN_FEATURE_DURATION_S = 5.0
WELCH_SEGMENT_S = 2.0
TEMPLATE_HALF_WINDOW_S = 0.300
AGREEMENT_TOLERANCE_S = 0.100
SPECTRUM_FLOOR_HZ = 0.5

FEATURE_COLUMNS = (
    "kurtosis",
    "skewness",
    "power_ratio_5_20",
    "spectral_purity",
    "median_hr_bpm",
    "min_rr_s",
    "max_rr_s",
    "template_corr",
    "detector_agreement",
)
TABLE_HEADER = ("id",) + FEATURE_COLUMNS + ("metric",)


@dataclass(frozen=True)
class FeatureVector:
    """Per-window features; beat-derived fields are ``None`` with fewer than 3 beats.

    ``kurtosis`` is the non-excess (Pearson) value, 3 for Gaussian data.
    """

    kurtosis: float
    skewness: float
    power_ratio_5_20: float
    spectral_purity: float
    median_hr_bpm: Optional[float] = None
    min_rr_s: Optional[float] = None
    max_rr_s: Optional[float] = None
    template_corr: Optional[float] = None
    detector_agreement: Optional[float] = None

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in FEATURE_COLUMNS)


def welch_spectrum(x: Signal) -> tuple[np.ndarray, np.ndarray]:
    nperseg = min(len(x), int(round(WELCH_SEGMENT_S * x.fs)))
    return welch(
        x.samples, fs=x.fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend="constant", scaling="density",
    )


def spectral_features(x: Signal) -> tuple[float, float]:
    """Band-power ratio P(5-20 Hz)/P(0.5 Hz-Nyquist) and spectral purity."""
    f, p = welch_spectrum(x)
    band = f >= SPECTRUM_FLOOR_HZ
    f, p = f[band], p[band]
    total = p.sum()
    if not total > 0:
        return math.nan, math.nan
    ratio = p[(f >= 5.0) & (f <= 20.0)].sum() / total
    w0, w2, w4 = total, np.sum(f**2 * p), np.sum(f**4 * p)
    purity = w2**2 / (w0 * w4)
    return float(ratio), float(purity)


def template_correlation(x: Signal, peaks: np.ndarray) -> Optional[float]:
    half = int(round(TEMPLATE_HALF_WINDOW_S * x.fs))
    beats = [x.samples[i - half : i + half + 1] for i in peaks if i - half >= 0 and i + half < len(x)]
    if len(beats) < 2:
        return None
    beats = np.asarray(beats)
    template = beats.mean(axis=0)
    corrs = []
    for b in beats:
        if np.std(b) == 0 or np.std(template) == 0:
            return None
        corrs.append(np.corrcoef(b, template)[0, 1])
    return float(np.mean(corrs))


def extract_features(x: Signal) -> FeatureVector:
    if x.duration < MIN_FEATURE_DURATION_S:
        raise InvalidSignalError(
            f"features need >= {MIN_FEATURE_DURATION_S} s of signal, got {x.duration:.3f} s"
        )
    data = x.samples
    if np.std(data) > 0:
        kurt = float(kurtosis(data, fisher=False, bias=True))
        skw = float(skew(data, bias=True))
    else:
        kurt = skw = math.nan
    ratio, purity = spectral_features(x)

    ref = detect_rpeaks_reference(x)
    if len(ref) < 3:
        return FeatureVector(kurt, skw, ratio, purity)

    rr = np.diff(ref.indices) / x.fs
    alt = detect_rpeaks_alternate(x)
    matched = match_peaks(ref, alt, AGREEMENT_TOLERANCE_S, x.fs).tp
    return FeatureVector(
        kurtosis=kurt,
        skewness=skw,
        power_ratio_5_20=ratio,
        spectral_purity=purity,
        median_hr_bpm=float(np.median(60.0 / rr)),
        min_rr_s=float(rr.min()),
        max_rr_s=float(rr.max()),
        template_corr=template_correlation(x, ref.indices),
        detector_agreement=matched / len(ref),
    )


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def export_features(rows: Iterable[tuple], path) -> None:
    """Write ``(window_id, FeatureVector, metric)`` rows as CSV.

    Columns are fixed to :data:`TABLE_HEADER`; missing values are empty cells.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_HEADER)
            for window_id, fv, metric in rows:
                writer.writerow([window_id, *(_cell(v) for v in fv.values()), _cell(metric)])
    except OSError as exc:
        raise FileError(f"cannot write feature table {path}: {exc}") from exc


def read_features(path) -> list[tuple]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TABLE_HEADER:
                raise ValueError(f"unexpected header {header}")
            out = []
            for row in reader:
                vals = [float(c) if c != "" else None for c in row[1:]]
                out.append((row[0], FeatureVector(*vals[:-1]), vals[-1]))
            return out
    except OSError as exc:
        raise FileError(f"cannot read feature table {path}: {exc}") from exc
