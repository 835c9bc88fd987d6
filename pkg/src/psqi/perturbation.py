"""Additive colored-Gaussian perturbations under global and local SNR limits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNoiseError, DegenerateSignalError, InvalidCutoffError, InvalidLengthError
from .rng import GaussianStream, normalize_seed
from .signal_core import Signal, SnrConfig, cached_design, local_deviation_bound, zero_phase

NOISE_FILTER_ORDER = 6
MIN_FREQ_HZ = 0.1
MIN_BANDWIDTH_HZ = 0.5
# amplitude shrink so rounding can never push the realized SNR below gamma
SNR_GUARD = 1.0 - 1e-12


@dataclass(frozen=True)
class PerturbationParams:
    f_low: float
    f_high: float

    def validate(self, fs: float) -> None:
        if not (0.0 < self.f_low < self.f_high < fs / 2.0):
            raise InvalidCutoffError(
                f"need 0 < f_low < f_high < fs/2, got ({self.f_low}, {self.f_high}) at fs={fs}"
            )
        # small slack: decode() produces bands of exactly MIN_BANDWIDTH_HZ
        if self.f_high - self.f_low < MIN_BANDWIDTH_HZ - 1e-9:
            raise InvalidCutoffError(
                f"band ({self.f_low}, {self.f_high}) narrower than {MIN_BANDWIDTH_HZ} Hz"
            )


@dataclass(frozen=True, eq=False)
class NoiseSample:
    values: np.ndarray
    seed: int


def sample_noise(seed: int, n: int) -> NoiseSample:
    """``n`` i.i.d. standard normals; identical for identical ``(seed, n)``."""
    if n < 2:
        raise InvalidLengthError(f"noise length must be >= 2, got {n}")
    values = GaussianStream(seed).standard_normal(int(n))
    values.setflags(write=False)
    return NoiseSample(values, normalize_seed(seed))


def shape_noise(z: NoiseSample, theta: PerturbationParams, fs: float) -> np.ndarray:
    """Zero-phase 6th-order Butterworth bandpass of the white noise sample."""
    theta.validate(fs)
    coeffs = cached_design(NOISE_FILTER_ORDER, "bandpass", (theta.f_low, theta.f_high), fs)
    return zero_phase(coeffs, z.values)


def scaled_deviation(x_filt: Signal, colored: np.ndarray, gamma: float) -> np.ndarray:
    """Colored noise rescaled so that its global SNR against ``x_filt`` equals ``gamma``."""
    signal_norm = float(np.linalg.norm(x_filt.samples))
    noise_norm = float(np.linalg.norm(colored))
    if signal_norm == 0.0:
        raise DegenerateSignalError("baseline-filtered signal has zero energy")
    if noise_norm == 0.0:
        raise DegenerateNoiseError("band-limited noise has zero energy")
    return (SNR_GUARD * signal_norm / (np.sqrt(gamma) * noise_norm)) * colored


def apply_perturbation(
    x: Signal,
    x_filt: Signal,
    z: NoiseSample,
    theta: PerturbationParams,
    cfg: SnrConfig,
) -> Signal:
    """Return ``x + clip(delta)`` where ``delta`` sits exactly at the global SNR limit.

    Clipping saturates each deviation at the local bound and is not followed
    by any renormalization, so the global SNR after clipping can only rise.
    """
    if not (len(x) == len(x_filt) == z.values.size):
        raise InvalidLengthError(
            f"length mismatch: x={len(x)}, x_filt={len(x_filt)}, z={z.values.size}"
        )
    delta = scaled_deviation(x_filt, shape_noise(z, theta, x.fs), cfg.gamma)
    bound = local_deviation_bound(x_filt, cfg.beta, cfg.local_floor)
    return x.replace(x.samples + np.clip(delta, -bound, bound))
