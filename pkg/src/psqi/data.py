"""Dataset files, windowing and the synthetic ECG-like corpus."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import AnnotationMissingError, ConfigError, DataError
from .rng import GaussianStream, derive_seed
from .signal_core import Signal, cached_design, useful_component, zero_phase
from .tasks import BinaryLabel, PeakList

log = logging.getLogger(__name__)

Truth = Union[PeakList, BinaryLabel, None]


@dataclass(frozen=True, eq=False)
class AnnotatedWindow:
    window_id: str
    signal: Signal
    truth: Truth
    source: str = ""
    offset: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.truth, PeakList) and self.truth.indices.size:
            if self.truth.indices[-1] >= len(self.signal):
                raise DataError(f"{self.window_id}: peak index outside the window")


def segment(
    x: Signal,
    window_s: float = 10.0,
    truth: Truth = None,
    name: str = "record",
    source: str = "",
) -> list[AnnotatedWindow]:
    """Cut ``x`` into contiguous non-overlapping windows; the remainder is dropped.

    Peak annotations are re-indexed to window-local sample positions.
    """
    if window_s <= 0:
        raise ValueError("window length must be positive")
    win = int(round(window_s * x.fs))
    if win < 2:
        raise ValueError(f"window of {window_s} s is shorter than 2 samples at fs={x.fs}")
    peaks = truth.indices if isinstance(truth, PeakList) else None
    windows = []
    for k in range(len(x) // win):
        start = k * win
        if peaks is not None:
            local = peaks[(peaks >= start) & (peaks < start + win)] - start
            w_truth: Truth = PeakList(local, x.fs)
        else:
            w_truth = truth
        windows.append(
            AnnotatedWindow(
                window_id=f"{name}:{k}",
                signal=Signal(x.samples[start : start + win], x.fs),
                truth=w_truth,
                source=source or name,
                offset=start,
            )
        )
    return windows


# --- files -------------------------------------------------------------------


def _read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def read_record(csv_path: Path) -> tuple[Signal, Truth, dict]:
    csv_path = Path(csv_path)
    stem = csv_path.name[: -len(".csv")]
    meta_path = csv_path.with_name(stem + ".meta.json")
    if not meta_path.exists():
        raise DataError(f"{csv_path}: missing sidecar {meta_path.name}")
    meta = _read_json(meta_path)
    try:
        fs = float(meta["fs_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{meta_path}: needs a numeric 'fs_hz'") from exc

    values = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "value"]:
            raise DataError(f"{csv_path}:1: expected header 't,value', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{csv_path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                values.append(float(row[1]))
            except ValueError as exc:
                raise DataError(f"{csv_path}:{lineno}: not a number: {row[1]!r}") from exc
    try:
        signal = Signal(values, fs)
    except ValueError as exc:
        raise DataError(f"{csv_path}: {exc}") from exc

    ann_path = csv_path.with_name(stem + ".ann.json")
    truth: Truth = None
    if ann_path.exists():
        ann = _read_json(ann_path)
        if "peaks" in ann:
            peaks = np.asarray(ann["peaks"], dtype=np.int64)
            if peaks.size and (peaks.min() < 0 or peaks.max() >= len(signal)):
                raise DataError(f"{ann_path}: peak index outside the record")
            try:
                truth = PeakList(np.sort(peaks), fs)
            except ValueError as exc:
                raise DataError(f"{ann_path}: {exc}") from exc
        elif "label" in ann:
            try:
                truth = BinaryLabel(int(ann["label"]))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{ann_path}: {exc}") from exc
        else:
            raise DataError(f"{ann_path}: needs 'peaks' or 'label'")
    return signal, truth, meta


def load_dataset(
    directory, window_s: float = 10.0, require: Optional[str] = None
) -> list[AnnotatedWindow]:
    """Read every ``<name>.csv`` record in ``directory`` and window it.

    ``require`` may be ``"peaks"`` or ``"label"`` to insist on that kind of
    annotation for every record.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    windows: list[AnnotatedWindow] = []
    for csv_path in sorted(directory.glob("*.csv")):
        name = csv_path.name[: -len(".csv")]
        signal, truth, _ = read_record(csv_path)
        if require == "peaks" and not isinstance(truth, PeakList):
            raise AnnotationMissingError(f"{name}: R-peak annotations required ({name}.ann.json)")
        if require == "label" and not isinstance(truth, BinaryLabel):
            raise AnnotationMissingError(f"{name}: binary label required ({name}.ann.json)")
        parts = segment(signal, window_s, truth, name=name, source=str(csv_path))
        if not parts:
            log.warning("%s: %.2f s is shorter than one %.2f s window, skipped", name, signal.duration, window_s)
        windows.extend(parts)
    return windows


def write_record(directory, name: str, signal: Signal, truth: Truth = None, units: str = "mV") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("t,value\n")
        for i, v in enumerate(signal.samples):
            fh.write(f"{i / signal.fs!r},{float(v)!r}\n")
    with open(directory / f"{name}.meta.json", "w", encoding="utf-8") as fh:
        json.dump({"fs_hz": signal.fs, "units": units}, fh, sort_keys=True)
        fh.write("\n")
    if truth is not None:
        ann = {"peaks": [int(i) for i in truth.indices]} if isinstance(truth, PeakList) else {"label": truth.value}
        with open(directory / f"{name}.ann.json", "w", encoding="utf-8") as fh:
            json.dump(ann, fh)
            fh.write("\n")


def write_windows(directory, windows: list[AnnotatedWindow]) -> None:
    """Write each window as its own record named after the part of its id before ':'."""
    for w in windows:
        write_record(directory, w.window_id.split(":")[0], w.signal, w.truth)


# --- synthetic corpus --------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for ECG-like pulse-train windows.

    ``snr_db`` is the range the per-window noise SNR is drawn from (uniform
    in dB); ``None`` disables noise. SNR is measured against the
    baseline-filtered clean window, exactly as the perturbation model does.
    """

    n_windows: int = 200
    fs: float = 250.0
    window_s: float = 10.0
    hr_bpm: tuple = (50.0, 100.0)
    rr_jitter: float = 0.03
    r_sigma_s: float = 0.010
    amplitude_jitter: float = 0.1
    t_wave_amplitude: float = 0.25
    t_sigma_s: float = 0.040
    t_delay_s: float = 0.300
    snr_db: Optional[tuple] = (0.0, 40.0)
    noise_band_hz: tuple = (0.5, 40.0)
    weak_fraction: float = 0.0
    weak_amplitude: float = 0.25
    edge_margin_s: float = 0.3

    def validate(self) -> None:
        lo, hi = self.hr_bpm
        if not (30.0 <= lo <= hi <= 220.0):
            raise ConfigError(f"heart rate range must lie within [30, 220] bpm, got {self.hr_bpm}")
        if self.n_windows < 0 or self.fs <= 0 or self.window_s <= 0:
            raise ConfigError("n_windows, fs and window_s must be positive")
        if self.snr_db is not None:
            a, b = self.snr_db
            if not (np.isfinite(a) and np.isfinite(b) and a <= b):
                raise ConfigError(f"SNR range must be finite and ordered, got {self.snr_db}")
            f_lo, f_hi = self.noise_band_hz
            if not (0 < f_lo < f_hi < self.fs / 2):
                raise ConfigError(f"noise band {self.noise_band_hz} invalid at fs={self.fs}")
        if not (0.0 <= self.weak_fraction <= 1.0):
            raise ConfigError("weak_fraction must lie in [0, 1]")
        if not (0.0 <= self.amplitude_jitter < 1.0) or self.rr_jitter < 0:
            raise ConfigError("jitter values must be nonnegative (amplitude jitter < 1)")
        if self.window_s <= 2 * self.edge_margin_s:
            raise ConfigError("window too short for the edge margin")


def _bump(t: np.ndarray, centre: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - centre) / sigma) ** 2)


def synth_window(spec: SynthSpec, seed: int, index: int, weak: bool = False) -> AnnotatedWindow:
    rng = GaussianStream(derive_seed(seed, index, "synth"))
    n = int(round(spec.window_s * spec.fs))
    t = np.arange(n) / spec.fs
    rr_mean = 60.0 / rng.uniform(low=spec.hr_bpm[0], high=spec.hr_bpm[1])

    beats = []
    tb = spec.edge_margin_s + rng.uniform() * rr_mean
    while tb < spec.window_s - spec.edge_margin_s:
        beats.append(tb)
        tb += rr_mean * (1.0 + spec.rr_jitter * (2.0 * rng.uniform() - 1.0))
    amps = 1.0 + spec.amplitude_jitter * (2.0 * rng.uniform(len(beats)) - 1.0)
    weak_beat = None
    if weak and len(beats) >= 3:
        weak_beat = rng.integers(1, len(beats) - 1)
        amps[weak_beat] = spec.weak_amplitude

    clean = np.zeros(n)
    for centre, amp in zip(beats, amps):
        clean += amp * _bump(t, centre, spec.r_sigma_s)
        if spec.t_wave_amplitude > 0:
            clean += spec.t_wave_amplitude * amp * _bump(t, centre + spec.t_delay_s, spec.t_sigma_s)

    meta = {"weak_beat": weak_beat, "n_beats": len(beats), "hr_bpm": 60.0 / rr_mean}
    samples = clean
    if spec.snr_db is not None:
        snr_db = rng.uniform(low=spec.snr_db[0], high=spec.snr_db[1]) if spec.snr_db[1] > spec.snr_db[0] else spec.snr_db[0]
        white = GaussianStream(derive_seed(seed, index, "synth-noise")).standard_normal(n)
        colored = zero_phase(cached_design(6, "bandpass", tuple(spec.noise_band_hz), spec.fs), white)
        ref = useful_component(Signal(clean, spec.fs)).samples
        noise = colored * np.linalg.norm(ref) / (np.sqrt(10.0 ** (snr_db / 10.0)) * np.linalg.norm(colored))
        samples = clean + noise
        meta["snr_db"] = snr_db
    peaks = np.round(np.asarray(beats) * spec.fs).astype(np.int64)
    return AnnotatedWindow(
        window_id=f"synth_{index:04d}:0",
        signal=Signal(samples, spec.fs),
        truth=PeakList(peaks, spec.fs),
        source="synthetic",
        meta=meta,
    )


def synth_corpus(spec: SynthSpec = SynthSpec(), seed: int = 0) -> list[AnnotatedWindow]:
    """Seeded corpus of pulse-train windows with exact R-peak ground truth.

    When ``weak_fraction > 0`` exactly ``round(weak_fraction * n_windows)``
    windows (chosen by the seed) get one interior beat attenuated to
    ``weak_amplitude``.
    """
    spec.validate()
    n_weak = int(round(spec.weak_fraction * spec.n_windows))
    picker = GaussianStream(derive_seed(seed, "corpus", "weak"))
    order = np.argsort(picker.uniform(spec.n_windows), kind="stable")
    weak_set = set(int(i) for i in order[:n_weak])
    return [synth_window(spec, seed, i, weak=i in weak_set) for i in range(spec.n_windows)]
