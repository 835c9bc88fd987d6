"""A small canonical CMA-ES and the unconstrained encoding of noise bands.

The optimizer follows the standard (mu/mu_w, lambda) formulation with
cumulative step-size adaptation, rank-one and rank-mu covariance updates and
the default strategy parameters from Hansen's tutorial. It is written for
the two-dimensional band search but nothing in it depends on the dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .perturbation import MIN_BANDWIDTH_HZ, MIN_FREQ_HZ, PerturbationParams
from .rng import GaussianStream

MAX_FREQ_FRACTION = 0.45
# logistic slope 4 gives unit slope at the origin, so sigma is in box units
LOGISTIC_SCALE = 4.0


@dataclass(frozen=True)
class CmaConfig:
    population: int = 5
    max_iterations: int = 2
    initial_sigma: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if int(self.population) != self.population or self.population < 2:
            raise ValueError(f"population must be an integer >= 2, got {self.population}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if not (0.0 < self.initial_sigma <= 1.0):
            raise ValueError(f"initial_sigma must lie in (0, 1], got {self.initial_sigma}")


@dataclass(frozen=True, eq=False)
class SearchPoint:
    u: np.ndarray
    theta: Optional[PerturbationParams]
    objective: float
    generation: int = 0


class MinimizeResult(NamedTuple):
    best_u: np.ndarray
    best_value: float
    history: list


def frequency_range(fs: float) -> tuple[float, float]:
    f_max = MAX_FREQ_FRACTION * fs
    if f_max - MIN_FREQ_HZ < MIN_BANDWIDTH_HZ:
        raise ValueError(f"fs={fs} Hz leaves no room for a {MIN_BANDWIDTH_HZ} Hz noise band")
    return MIN_FREQ_HZ, f_max


def decode(u, fs: float) -> PerturbationParams:
    """Map any real 2-vector onto an admissible ``(f_low, f_high)`` band.

    Each coordinate is squashed by a logistic onto ``[log f_min, log f_max]``;
    the pair is sorted and widened symmetrically to at least the minimum
    bandwidth, then shifted back inside the range if the widening overshoots.
    """
    f_min, f_max = frequency_range(fs)
    s = expit(LOGISTIC_SCALE * np.asarray(u, dtype=np.float64).ravel()[:2])
    lo, hi = np.sort(np.exp(np.log(f_min) + s * (np.log(f_max) - np.log(f_min))))
    lo, hi = float(lo), float(hi)
    if hi - lo < MIN_BANDWIDTH_HZ:
        centre = 0.5 * (lo + hi)
        lo, hi = centre - MIN_BANDWIDTH_HZ / 2, centre + MIN_BANDWIDTH_HZ / 2
    if lo < f_min:
        lo, hi = f_min, max(hi, f_min + MIN_BANDWIDTH_HZ)
    if hi > f_max:
        lo, hi = min(lo, f_max - MIN_BANDWIDTH_HZ), f_max
    return PerturbationParams(lo, hi)


class CMAES:
    """Ask/tell CMA-ES state for minimization."""

    def __init__(self, mean, sigma: float, population: int, seed: int):
        self.mean = np.array(mean, dtype=np.float64)
        n = self.dim = self.mean.size
        self.sigma = float(sigma)
        self.lam = int(population)
        self.mu = self.lam // 2
        raw = np.log((self.lam + 1) / 2.0) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        self.c_sigma = (self.mu_eff + 2) / (n + self.mu_eff + 5)
        self.d_sigma = 1 + 2 * max(0.0, np.sqrt((self.mu_eff - 1) / (n + 1)) - 1) + self.c_sigma
        self.c_c = (4 + self.mu_eff / n) / (n + 4 + 2 * self.mu_eff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1 - self.c_1,
            2 * (self.mu_eff - 2 + 1 / self.mu_eff) / ((n + 2) ** 2 + self.mu_eff),
        )
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.generation = 0
        self._rng = GaussianStream(seed)
        self._pending: Optional[np.ndarray] = None

    def ask(self) -> np.ndarray:
        z = self._rng.standard_normal((self.lam, self.dim))
        y = (z * self.D) @ self.B.T
        self._pending = y
        return self.mean + self.sigma * y

    def tell(self, values) -> None:
        if self._pending is None:
            raise RuntimeError("tell() called before ask()")
        y = self._pending
        self._pending = None
        values = np.asarray(values, dtype=np.float64)
        order = np.argsort(values, kind="stable")
        y_sel = y[order[: self.mu]]
        y_w = self.weights @ y_sel
        self.mean = self.mean + self.sigma * y_w

        n = self.dim
        c_inv_sqrt = (self.B / self.D) @ self.B.T
        self.p_sigma = (1 - self.c_sigma) * self.p_sigma + np.sqrt(
            self.c_sigma * (2 - self.c_sigma) * self.mu_eff
        ) * (c_inv_sqrt @ y_w)
        norm_ps = np.linalg.norm(self.p_sigma)
        self.generation += 1
        h_sigma = float(
            norm_ps / np.sqrt(1 - (1 - self.c_sigma) ** (2 * self.generation))
            < (1.4 + 2 / (n + 1)) * self.chi_n
        )
        self.p_c = (1 - self.c_c) * self.p_c + h_sigma * np.sqrt(
            self.c_c * (2 - self.c_c) * self.mu_eff
        ) * y_w

        rank_mu = (y_sel.T * self.weights) @ y_sel
        decay = 1 - self.c_1 - self.c_mu + (1 - h_sigma) * self.c_1 * self.c_c * (2 - self.c_c)
        self.C = decay * self.C + self.c_1 * np.outer(self.p_c, self.p_c) + self.c_mu * rank_mu
        self.C = 0.5 * (self.C + self.C.T)
        self.sigma *= np.exp((self.c_sigma / self.d_sigma) * (norm_ps / self.chi_n - 1))

        eigvals, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(eigvals, 1e-300))


def _penalized(values: np.ndarray) -> np.ndarray:
    finite = np.isfinite(values)
    if finite.all():
        return values
    worst = values[finite].max() + 1.0 if finite.any() else 1.0
    return np.where(finite, values, worst)


def minimize(
    objective: Callable[[np.ndarray], float],
    cfg: CmaConfig,
    decoder: Optional[Callable[[np.ndarray], PerturbationParams]] = None,
    x0=(0.0, 0.0),
    callback: Optional[Callable[[CMAES], None]] = None,
) -> MinimizeResult:
    """Run ``cfg.max_iterations`` generations and return the best evaluated point.

    Exactly ``population * max_iterations`` objective calls are made. The
    best point is the minimum over every evaluated candidate, with the
    earliest evaluation winning ties. Non-finite objective values are ranked
    as (worst finite value in the generation) + 1.
    """
    es = CMAES(x0, cfg.initial_sigma, cfg.population, cfg.seed)
    history: list[SearchPoint] = []
    best_u, best_value = np.array(x0, dtype=np.float64), np.inf
    for gen in range(cfg.max_iterations):
        candidates = es.ask()
        values = np.empty(len(candidates))
        for i, u in enumerate(candidates):
            value = float(objective(u))
            values[i] = value
            theta = decoder(u) if decoder is not None else None
            history.append(SearchPoint(u.copy(), theta, value, gen))
            if np.isfinite(value) and value < best_value:
                best_u, best_value = u.copy(), value
        es.tell(_penalized(values))
        if callback is not None:
            callback(es)
    return MinimizeResult(best_u, float(best_value), history)
