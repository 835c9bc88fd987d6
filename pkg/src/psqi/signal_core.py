"""Signals, Butterworth design, zero-phase filtering and SNR helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import sosfilt

from .errors import (
    InvalidCutoffError,
    InvalidOrderError,
    InvalidSignalError,
    SignalTooShortError,
    UndefinedSnrError,
)

BASELINE_CUTOFF_HZ = 0.5
BASELINE_ORDER = 6


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled univariate time series.

    ``samples`` is stored as a read-only float64 copy so instances can be
    shared freely between threads and processes.
    """

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True).ravel()
        fs = float(self.fs)
        if not np.isfinite(fs) or fs <= 0:
            raise InvalidSignalError(f"sampling rate must be positive, got {self.fs!r}")
        if data.size < 2:
            raise InvalidSignalError(f"a signal needs at least 2 samples, got {data.size}")
        if not np.all(np.isfinite(data)):
            raise InvalidSignalError("signal contains NaN or Inf samples")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "fs", fs)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def replace(self, samples) -> "Signal":
        return Signal(samples, self.fs)


@dataclass(frozen=True)
class FilterSpec:
    order: int
    kind: str
    cutoffs_hz: tuple

    def __post_init__(self):
        cut = self.cutoffs_hz
        if np.isscalar(cut):
            cut = (cut,)
        object.__setattr__(self, "cutoffs_hz", tuple(float(c) for c in cut))
        if self.kind not in ("lowpass", "highpass", "bandpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")

    def validate(self, fs: float) -> None:
        if int(self.order) != self.order or self.order < 1:
            raise InvalidOrderError(f"filter order must be a positive integer, got {self.order!r}")
        expected = 2 if self.kind == "bandpass" else 1
        if len(self.cutoffs_hz) != expected:
            raise InvalidCutoffError(
                f"{self.kind} needs {expected} cutoff(s), got {len(self.cutoffs_hz)}"
            )
        nyquist = fs / 2.0
        for c in self.cutoffs_hz:
            if not (0.0 < c < nyquist):
                raise InvalidCutoffError(f"cutoff {c} Hz outside (0, {nyquist}) Hz")
        if self.kind == "bandpass" and not self.cutoffs_hz[0] < self.cutoffs_hz[1]:
            raise InvalidCutoffError(
                f"bandpass needs low < high, got {self.cutoffs_hz[0]} >= {self.cutoffs_hz[1]}"
            )


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    """Cascade of second-order sections, rows ``[b0, b1, b2, 1, a1, a2]``.

    ``order`` is the design order and sets the filtfilt pad length.
    """

    sos: np.ndarray
    order: int = 0
    poles: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        sos = np.array(self.sos, dtype=np.float64, copy=True).reshape(-1, 6)
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)

    @classmethod
    def identity(cls) -> "FilterCoefficients":
        return cls(np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]]), order=0)

    @property
    def pad_length(self) -> int:
        return 3 * (2 * self.order + 1)

    def frequency_response(self, freqs_hz, fs: float) -> np.ndarray:
        """Complex single-pass response at the given frequencies."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
        zinv = np.exp(-1j * w)
        h = np.ones_like(zinv)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h *= (b0 + b1 * zinv + b2 * zinv**2) / (a0 + a1 * zinv + a2 * zinv**2)
        return h


def db_to_linear(db: float) -> float:
    return float(10.0 ** (np.asarray(db, dtype=np.float64) / 10.0))


def linear_to_db(ratio: float) -> float:
    return float(10.0 * np.log10(ratio))


@dataclass(frozen=True)
class SnrConfig:
    """Minimum global/local SNR in dB plus an optional per-sample deviation floor."""

    gamma_db: float = 25.0
    beta_db: float = 10.0
    local_floor: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma_db) and np.isfinite(self.beta_db)):
            raise ValueError("SNR levels must be finite dB values")
        if self.local_floor < 0:
            raise ValueError("local_floor must be nonnegative")

    @property
    def gamma(self) -> float:
        return db_to_linear(self.gamma_db)

    @property
    def beta(self) -> float:
        return db_to_linear(self.beta_db)


# --- Butterworth design ------------------------------------------------------


def _analog_prototype(order: int) -> np.ndarray:
    k = np.arange(order)
    return np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))


def _pair_sections(zeros: np.ndarray, poles: np.ndarray, gain: float) -> np.ndarray:
    zeros = np.sort(np.real(zeros))
    tol = 1e-12
    upper = poles[poles.imag > tol]
    real = np.sort(poles[np.abs(poles.imag) <= tol].real)

    denominators = [[1.0, -2.0 * p.real, abs(p) ** 2] for p in upper]
    for i in range(0, real.size - 1, 2):
        r1, r2 = real[i], real[i + 1]
        denominators.append([1.0, -(r1 + r2), r1 * r2])
    if real.size % 2:
        denominators.append([1.0, -real[-1], 0.0])

    # pair outermost zeros together (+1 with -1 for bandpass designs)
    zs = list(zeros)
    numerators = []
    for den in denominators:
        n_poles = 2 if den[2] != 0.0 else 1
        picked = []
        for _ in range(n_poles):
            picked.append(zs.pop(0) if len(picked) % 2 == 0 else zs.pop(-1))
        if n_poles == 2:
            z1, z2 = picked
            numerators.append([1.0, -(z1 + z2), z1 * z2])
        else:
            numerators.append([1.0, -picked[0], 0.0])

    n_sec = len(denominators)
    per_section = abs(gain) ** (1.0 / n_sec)
    sos = np.zeros((n_sec, 6))
    for i, (num, den) in enumerate(zip(numerators, denominators)):
        sos[i, :3] = np.asarray(num) * per_section
        sos[i, 3:] = den
    if gain < 0:
        sos[0, :3] *= -1.0
    return sos


def design_butterworth(spec: FilterSpec, fs: float) -> FilterCoefficients:
    """Digital Butterworth filter via bilinear transform with frequency prewarping."""
    spec.validate(fs)
    n = int(spec.order)
    fs = float(fs)
    fs2 = 2.0 * fs
    warped = [fs2 * np.tan(np.pi * c / fs) for c in spec.cutoffs_hz]
    proto = _analog_prototype(n)

    if spec.kind == "lowpass":
        p_a = warped[0] * proto
        z_a = np.zeros(0)
        k_a = warped[0] ** n
    elif spec.kind == "highpass":
        p_a = warped[0] / proto
        z_a = np.zeros(n)
        k_a = 1.0
    else:
        bw = warped[1] - warped[0]
        w0_sq = warped[0] * warped[1]
        half = proto * bw / 2.0
        root = np.sqrt(half**2 - w0_sq)
        p_a = np.concatenate([half + root, half - root])
        z_a = np.zeros(n)
        k_a = bw**n

    z_d = (fs2 + z_a) / (fs2 - z_a)
    p_d = (fs2 + p_a) / (fs2 - p_a)
    z_d = np.concatenate([z_d, -np.ones(p_a.size - z_a.size)])
    k_d = float(k_a * np.real(np.prod(fs2 - z_a) / np.prod(fs2 - p_a)))

    if np.any(np.abs(p_d) >= 1.0):
        raise InvalidCutoffError(f"design for {spec} at fs={fs} is not stable")
    sos = _pair_sections(z_d, p_d, k_d)
    return FilterCoefficients(sos, order=n, poles=p_d)


@lru_cache(maxsize=256)
def cached_design(order: int, kind: str, cutoffs: tuple, fs: float) -> FilterCoefficients:
    return design_butterworth(FilterSpec(order, kind, cutoffs), fs)


# --- zero-phase filtering ----------------------------------------------------


def _steady_state(sos: np.ndarray) -> np.ndarray:
    """Transposed direct-form II states of each section for a unit step at rest."""
    zi = np.zeros((sos.shape[0], 2))
    scale = 1.0
    for i, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        dc = (b0 + b1 + b2) / (1.0 + a1 + a2)
        s1 = b2 - a2 * dc
        s0 = b1 - a1 * dc + s1
        zi[i] = scale * np.array([s0, s1])
        scale *= dc
    return zi


def zero_phase(coeffs: FilterCoefficients, data: np.ndarray) -> np.ndarray:
    """Forward-backward filtering of a 1-D array with odd-reflection padding."""
    data = np.asarray(data, dtype=np.float64)
    n = data.size
    if n < 2:
        raise SignalTooShortError(f"need at least 2 samples to filter, got {n}")
    pad = min(coeffs.pad_length, n - 1)
    if pad > 0:
        left = 2.0 * data[0] - data[pad:0:-1]
        right = 2.0 * data[-1] - data[-2 : -pad - 2 : -1]
        ext = np.concatenate([left, data, right])
    else:
        ext = data
    sos = np.array(coeffs.sos)
    zi = _steady_state(sos)
    y, _ = sosfilt(sos, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = sosfilt(sos, y, zi=zi * y[0])
    y = y[::-1]
    return y[pad : pad + n] if pad > 0 else y


def filtfilt(coeffs: FilterCoefficients, x: Signal) -> Signal:
    return x.replace(zero_phase(coeffs, x.samples))


def useful_component(x: Signal) -> Signal:
    """Baseline-removed copy of ``x`` (6th-order 0.5 Hz zero-phase highpass)."""
    if x.fs <= 2 * BASELINE_CUTOFF_HZ:
        raise InvalidCutoffError(f"fs={x.fs} Hz too low for a {BASELINE_CUTOFF_HZ} Hz highpass")
    coeffs = cached_design(BASELINE_ORDER, "highpass", (BASELINE_CUTOFF_HZ,), x.fs)
    return filtfilt(coeffs, x)


# --- SNR ---------------------------------------------------------------------


def _values(v) -> np.ndarray:
    return v.samples if isinstance(v, Signal) else np.asarray(v, dtype=np.float64)


def global_snr(x_filt, delta) -> float:
    """Linear ratio ``||x_filt||^2 / ||delta||^2``."""
    xf, d = _values(x_filt), _values(delta)
    if xf.shape != d.shape:
        raise ValueError(f"length mismatch: {xf.shape} vs {d.shape}")
    noise = float(np.dot(d, d))
    if noise <= 0.0:
        raise UndefinedSnrError("perturbation has zero energy; the signal is unperturbed")
    return float(np.dot(xf, xf)) / noise


def local_deviation_bound(x_filt, beta_linear: float, floor: float = 0.0) -> np.ndarray:
    """Per-sample admissible deviation ``max(|x_filt_i| / sqrt(beta), floor)``."""
    if not beta_linear > 0:
        raise ValueError("beta must be positive")
    xf = _values(x_filt)
    return np.maximum(np.abs(xf) / np.sqrt(beta_linear), floor)
