"""Scoring an SQI against realized task metrics.

Binned monotonicity with Spearman correlation, threshold separation margins
and the global/local SNR sweep. Ground truth enters here and only here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .engine import PsqiConfig, score_many
from .errors import InfeasibleMarginError, RangeError, UndefinedCorrelationError, UndefinedMarginError
from .tasks import TaskBinding

DEFAULT_BINS = 25
DEFAULT_MIN_COUNT = 5


@dataclass(frozen=True)
class EvalRecord:
    window_id: str
    sqi: float
    metric: float

    def __post_init__(self):
        if not (math.isfinite(self.sqi) and math.isfinite(self.metric)):
            raise ValueError(f"{self.window_id}: sqi and metric must be finite")


@dataclass(frozen=True)
class BinStat:
    lower: float
    upper: float
    count: int
    mean_metric: float


@dataclass(frozen=True)
class MarginResult:
    tau_star: float
    delta_star: float
    above_mean: float
    below_mean: float
    above_count: int
    below_count: int


def realized_metric(binding: TaskBinding, signal, truth) -> float:
    """``h(f(x), y)`` against ground truth."""
    return float(binding.metric(binding.algorithm(signal), truth))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def monotonicity_bins(records: Sequence[EvalRecord], n_bins: int = DEFAULT_BINS) -> list[BinStat]:
    """Mean metric per uniform SQI bin on [0, 1]; the last bin includes 1, empty bins are dropped."""
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    groups: dict[int, list[float]] = {}
    for r in records:
        if not 0.0 <= r.sqi <= 1.0:
            raise RangeError(f"{r.window_id}: sqi {r.sqi} outside [0, 1]; normalize first")
        k = min(int(np.searchsorted(edges, r.sqi, side="right")) - 1, n_bins - 1)
        groups.setdefault(k, []).append(r.metric)
    return [
        BinStat(float(edges[k]), float(edges[k + 1]), len(groups[k]), _mean(groups[k]))
        for k in sorted(groups)
    ]


def is_monotone(bins: Sequence[BinStat]) -> bool:
    means = [b.mean_metric for b in bins]
    return all(a < b for a, b in zip(means, means[1:]))


def spearman(xs, ys) -> float:
    """Pearson correlation of mid-ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise UndefinedCorrelationError("need two equal-length sequences of at least 2 values")
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant sequence")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.clip(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)), -1.0, 1.0))


def binned_spearman(bins: Sequence[BinStat]) -> float:
    """Spearman over (bin index, bin mean) pairs of the nonempty bins."""
    return spearman(np.arange(len(bins)), [b.mean_metric for b in bins])


def _split(records, tau):
    above = [r.metric for r in records if r.sqi >= tau]
    below = [r.metric for r in records if r.sqi < tau]
    return above, below


def separation_margin(records: Sequence[EvalRecord], tau: float) -> float:
    above, below = _split(records, tau)
    if not above or not below:
        raise UndefinedMarginError(f"threshold {tau} leaves one side empty")
    return _mean(above) - _mean(below)


def candidate_thresholds(records: Sequence[EvalRecord]) -> list[float]:
    levels = sorted({r.sqi for r in records})
    return [(a + b) / 2.0 for a, b in zip(levels, levels[1:])]


def optimal_margin(records: Sequence[EvalRecord], min_count: int = DEFAULT_MIN_COUNT) -> MarginResult:
    """Best separation margin over midpoint thresholds with ``min_count`` records per side.

    Ties go to the smallest threshold.
    """
    if len(records) < 2 * min_count:
        raise InfeasibleMarginError(
            f"{len(records)} records cannot put {min_count} on each side of a threshold "
            f"(need at least {2 * min_count})"
        )
    best: Optional[MarginResult] = None
    for tau in candidate_thresholds(records):
        above, below = _split(records, tau)
        if len(above) < min_count or len(below) < min_count:
            continue
        a, b = _mean(above), _mean(below)
        if best is None or a - b > best.delta_star:
            best = MarginResult(tau, a - b, a, b, len(above), len(below))
    if best is None:
        raise InfeasibleMarginError(
            f"no threshold leaves at least {min_count} records on each side "
            f"({len({r.sqi for r in records})} distinct SQI values)"
        )
    return best


def binary_margin(records: Sequence[EvalRecord]) -> float:
    """Accuracy gap between windows rated 1 and windows rated 0."""
    ones = [r.metric for r in records if r.sqi == 1]
    zeros = [r.metric for r in records if r.sqi == 0]
    if len(ones) + len(zeros) != len(records):
        raise RangeError("binary margin needs sqi values in {0, 1}")
    if not ones or not zeros:
        raise UndefinedMarginError("binary margin needs both SQI groups to be nonempty")
    return _mean(ones) - _mean(zeros)


# --- SNR sweep ---------------------------------------------------------------


@dataclass
class SweepCell:
    gamma_db: float
    beta_db: float
    margin: Optional[MarginResult] = None
    error: Optional[str] = None
    infeasible: bool = False
    scores: list = field(default_factory=list)

    @property
    def delta_star(self) -> Optional[float]:
        return None if self.margin is None else self.margin.delta_star


@dataclass
class SweepResult:
    gamma_grid: list
    beta_grid: list
    cells: list  # rows follow gamma_grid, columns follow beta_grid

    def matrix(self) -> list[list[Optional[float]]]:
        return [[c.delta_star for c in row] for row in self.cells]

    def argmax(self) -> Optional[tuple[int, int]]:
        best, where = None, None
        for i, row in enumerate(self.cells):
            for j, c in enumerate(row):
                if c.delta_star is not None and (best is None or c.delta_star > best):
                    best, where = c.delta_star, (i, j)
        return where


def snr_sweep(
    signals,
    window_ids,
    metrics: Sequence[float],
    binding: TaskBinding,
    gamma_grid: Sequence[float],
    beta_grid: Sequence[float],
    cfg: PsqiConfig = PsqiConfig(),
    min_count: int = DEFAULT_MIN_COUNT,
    jobs: Optional[int] = 1,
) -> SweepResult:
    """Optimal margin of the pSQI for every (global, local) SNR pair.

    ``metrics`` are the realized ground-truth metrics of the windows; they
    do not depend on the SNR configuration. Errors in one cell are recorded
    there and the sweep moves on.
    """
    if not gamma_grid or not beta_grid:
        raise ValueError("SNR grids must be nonempty")
    cells = []
    for g in gamma_grid:
        row = []
        for b in beta_grid:
            cell = SweepCell(float(g), float(b))
            try:
                cell_cfg = replace(cfg, snr=replace(cfg.snr, gamma_db=float(g), beta_db=float(b)))
                results = score_many(signals, window_ids, binding, cell_cfg, jobs=jobs)
                cell.scores = [r.score for r in results]
                records = [EvalRecord(w, s, m) for w, s, m in zip(window_ids, cell.scores, metrics)]
                cell.margin = optimal_margin(records, min_count)
            except InfeasibleMarginError as exc:
                cell.infeasible, cell.error = True, str(exc)
            except Exception as exc:  # noqa: BLE001 - recorded per cell by contract
                cell.error = f"{type(exc).__name__}: {exc}"
            row.append(cell)
        cells.append(row)
    return SweepResult([float(g) for g in gamma_grid], [float(b) for b in beta_grid], cells)
