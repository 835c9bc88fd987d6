"""Worst-case task metric under SNR-bounded colored-noise perturbations."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .cmaes import CmaConfig, decode, minimize
from .errors import DegenerateNoiseError
from .perturbation import PerturbationParams, apply_perturbation, sample_noise
from .rng import derive_seed
from .signal_core import Signal, SnrConfig, useful_component
from .tasks import TaskBinding

# relative energy below which the baseline-filtered signal counts as flat
DEGENERATE_RELATIVE_NORM = 1e-10


@dataclass(frozen=True)
class PsqiConfig:
    snr: SnrConfig = field(default_factory=SnrConfig)
    cma: CmaConfig = field(default_factory=CmaConfig)
    master_seed: int = 0

    def as_dict(self) -> dict:
        return {
            "gamma_db": self.snr.gamma_db,
            "beta_db": self.snr.beta_db,
            "local_floor": self.snr.local_floor,
            "population": self.cma.population,
            "max_iterations": self.cma.max_iterations,
            "initial_sigma": self.cma.initial_sigma,
            "cma_seed": self.cma.seed,
            "master_seed": self.master_seed,
        }


@dataclass(frozen=True, eq=False)
class Evaluation:
    theta: PerturbationParams
    value: float
    failed: bool = False
    u: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class PsqiResult:
    score: float
    worst_theta: Optional[PerturbationParams]
    clean_output: Any
    worst_output: Any
    evaluations: list
    degenerate: bool = False
    noise_seed: Optional[int] = None
    cma_seed: Optional[int] = None

    @property
    def task_calls(self) -> int:
        return 1 + len(self.evaluations)


def is_degenerate(x: Signal, x_filt: Signal) -> bool:
    filt_norm = float(np.linalg.norm(x_filt.samples))
    return filt_norm == 0.0 or filt_norm <= DEGENERATE_RELATIVE_NORM * float(np.linalg.norm(x.samples))


def window_seeds(cfg: PsqiConfig, window_id: str) -> tuple[int, int]:
    noise_seed = derive_seed(cfg.master_seed, window_id, "noise")
    cma_seed = derive_seed(cfg.master_seed, window_id, f"cmaes/{cfg.cma.seed}")
    return noise_seed, cma_seed


def perturb_for(x: Signal, theta: PerturbationParams, cfg: PsqiConfig, window_id: str = "0") -> Signal:
    """Rebuild the perturbed candidate that ``psqi_score`` evaluated for ``theta``."""
    noise_seed, _ = window_seeds(cfg, window_id)
    return apply_perturbation(x, useful_component(x), sample_noise(noise_seed, len(x)), theta, cfg.snr)


def psqi_score(x: Signal, binding: TaskBinding, cfg: PsqiConfig = PsqiConfig(), window_id: str = "0") -> PsqiResult:
    """Score ``x`` by the lowest metric reached over the CMA-ES candidate bands.

    The reference output is the algorithm's own output on the clean window;
    annotations are never consulted. A perturbed candidate on which the
    algorithm raises is scored 0 and flagged as failed.
    """
    window_id = str(window_id)
    x_filt = useful_component(x)
    clean = binding.algorithm(x)
    self_value = float(binding.metric(clean, clean))
    if is_degenerate(x, x_filt):
        return PsqiResult(self_value, None, clean, clean, [], degenerate=True)

    noise_seed, cma_seed = window_seeds(cfg, window_id)
    z = sample_noise(noise_seed, len(x))
    evaluations: list[Evaluation] = []
    outputs: list[Any] = []

    def objective(u: np.ndarray) -> float:
        theta = decode(u, x.fs)
        try:
            perturbed = apply_perturbation(x, x_filt, z, theta, cfg.snr)
        except DegenerateNoiseError:
            perturbed = x
        try:
            out = binding.algorithm(perturbed)
            value = float(binding.metric(out, clean))
            failed = not np.isfinite(value)
        except Exception:
            out, failed = None, True
        if failed:
            value = 0.0
        evaluations.append(Evaluation(theta, value, failed, u.copy()))
        outputs.append(out)
        return value

    minimize(objective, replace(cfg.cma, seed=cma_seed))
    values = np.array([e.value for e in evaluations])
    worst = int(np.argmin(values))
    return PsqiResult(
        score=float(values[worst]),
        worst_theta=evaluations[worst].theta,
        clean_output=clean,
        worst_output=outputs[worst],
        evaluations=evaluations,
        noise_seed=noise_seed,
        cma_seed=cma_seed,
    )


def _score_job(args):
    x, binding, cfg, window_id = args
    return psqi_score(x, binding, cfg, window_id)


def score_many(
    signals: Sequence[Signal],
    window_ids: Sequence[str],
    binding: TaskBinding,
    cfg: PsqiConfig,
    jobs: Optional[int] = 1,
) -> list[PsqiResult]:
    """Score windows independently; results come back in input order."""
    jobs = jobs or os.cpu_count() or 1
    work = [(x, binding, cfg, str(w)) for x, w in zip(signals, window_ids)]
    if jobs <= 1 or len(work) <= 1:
        return [_score_job(a) for a in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_score_job, work, chunksize=max(1, len(work) // (4 * jobs))))
