import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psqi.engine import PsqiConfig, psqi_score
from psqi.errors import InfeasibleMarginError, RangeError, UndefinedCorrelationError, UndefinedMarginError
from psqi.evaluation import (
    EvalRecord,
    binary_margin,
    binned_spearman,
    is_monotone,
    monotonicity_bins,
    optimal_margin,
    separation_margin,
    snr_sweep,
    spearman,
)
from psqi.data import SynthSpec, synth_corpus
from psqi.metrics import peak_f1
from psqi.signal_core import SnrConfig
from psqi.tasks import RPEAK_TASK


def recs(pairs):
    return [EvalRecord(str(i), float(q), float(h)) for i, (q, h) in enumerate(pairs)]


# --- oracles -----------------------------------------------------------------


def oracle_ranks(v):
    """Mid-ranks by counting: rank = #smaller + (#equal + 1) / 2."""
    return [sum(w < x for w in v) + (sum(w == x for w in v) + 1) / 2 for x in v]


def oracle_spearman(xs, ys):
    rx, ry = oracle_ranks(xs), oracle_ranks(ys)
    mx, my = math.fsum(rx) / len(rx), math.fsum(ry) / len(ry)
    num = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(math.fsum((a - mx) ** 2 for a in rx) * math.fsum((b - my) ** 2 for b in ry))
    return num / den


def oracle_margin(records, min_count):
    best = None
    qs = sorted({r.sqi for r in records})
    for i in range(len(qs) - 1):
        tau = (qs[i] + qs[i + 1]) / 2
        above = [r.metric for r in records if r.sqi >= tau]
        below = [r.metric for r in records if r.sqi < tau]
        if min(len(above), len(below)) < min_count:
            continue
        d = math.fsum(above) / len(above) - math.fsum(below) / len(below)
        if best is None or d > best[1]:
            best = (tau, d)
    return best


# --- bins / spearman ---------------------------------------------------------


def test_one_point_per_bin():
    bins = monotonicity_bins(recs([(k / 24, k / 24) for k in range(25)]))
    assert len(bins) == 25
    for b in bins:
        assert b.count == 1
        assert b.lower <= b.mean_metric <= b.upper
    assert is_monotone(bins)
    assert binned_spearman(bins) == pytest.approx(1.0)


def test_single_bin_grand_mean():
    bins = monotonicity_bins(recs([(0.49, 0.2), (0.50, 0.4), (0.51, 0.9)]))
    assert len(bins) == 1 and bins[0].count == 3
    assert bins[0].mean_metric == pytest.approx(0.5)


def test_bins_reject_out_of_range():
    with pytest.raises(RangeError):
        monotonicity_bins(recs([(1.2, 0.0)]))


def test_is_monotone_is_strict():
    bins = monotonicity_bins(recs([(0.1, 0.3), (0.5, 0.3), (0.9, 0.8)]))
    assert not is_monotone(bins)


@pytest.mark.parametrize(
    "xs, ys, expected",
    [([1, 2, 3], [10, 20, 30], 1.0), ([1, 2, 3], [3, 2, 1], -1.0), ([1, 2, 3, 4], [1, 1, 3, 4], 0.9487)],
)
def test_spearman_examples(xs, ys, expected):
    assert spearman(xs, ys) == pytest.approx(expected, abs=1e-3)


def test_spearman_tie_example_by_hand():
    # ranks (1,2,3,4) vs (1.5,1.5,3,4): 4.5 / sqrt(5 * 4.5)
    assert spearman([1, 2, 3, 4], [1, 1, 3, 4]) == pytest.approx(4.5 / math.sqrt(22.5), abs=1e-12)


@pytest.mark.parametrize("xs, ys", [([1], [2]), ([1, 1, 1], [1, 2, 3]), ([1, 2], [1, 2, 3])])
def test_spearman_degenerate(xs, ys):
    with pytest.raises(UndefinedCorrelationError):
        spearman(xs, ys)


def test_spearman_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(3, 40))
        xs = rng.integers(0, 6, n).astype(float)
        ys = rng.integers(0, 6, n).astype(float)
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        assert abs(spearman(xs, ys) - oracle_spearman(xs, ys)) <= 1e-12


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-5, 5)), min_size=3, max_size=30))
def test_spearman_rank_invariance(pairs):
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    if len(set(xs)) < 2 or len(set(ys)) < 2 or len(set(np.exp(xs))) != len(set(xs)):
        return
    base = spearman(xs, ys)
    assert spearman(np.exp(xs), ys) == pytest.approx(base, abs=1e-12)
    assert spearman(xs**3, ys) == pytest.approx(base, abs=1e-12)


# --- margins -----------------------------------------------------------------


def test_margin_examples():
    rs = recs([(0.1, 0), (0.2, 0.2), (0.8, 1), (0.9, 0.8)])
    assert separation_margin(rs, 0.5) == pytest.approx(0.8)
    assert separation_margin(recs([(q / 10, 0.7) for q in range(10)]), 0.45) == 0.0
    with pytest.raises(UndefinedMarginError):
        separation_margin(rs, 0.95)


def group_records(mean_one, mean_zero, n=1000):
    k1, k0 = round(mean_one * n), round(mean_zero * n)
    return recs([(1, 1)] * k1 + [(1, 0)] * (n - k1) + [(0, 1)] * k0 + [(0, 0)] * (n - k0))


def test_published_binary_margin():
    rs = group_records(0.981, 0.612)
    assert binary_margin(rs) == pytest.approx(0.369, abs=1e-12)
    assert separation_margin(rs, 0.5) == pytest.approx(0.369, abs=1e-12)


def test_binary_margin_extremes():
    assert binary_margin(recs([(1, 1)] * 3 + [(0, 0)] * 3)) == 1.0
    with pytest.raises(UndefinedMarginError):
        binary_margin(recs([(1, 1)] * 3))
    with pytest.raises(RangeError):
        binary_margin(recs([(0.5, 1), (0, 0)]))


def test_binary_margin_null():
    rng = np.random.default_rng(0)
    rs = recs(zip(rng.integers(0, 2, 10000), rng.integers(0, 2, 10000)))
    assert abs(binary_margin(rs)) < 0.05


def test_optimal_margin_single_split():
    low = [(k / 10, 1) for k in range(1, 6)]
    high = [(k / 10, 0) for k in range(6, 11)]
    m = optimal_margin(recs(low + high))
    assert m.tau_star == pytest.approx(0.55) and m.delta_star == -1.0
    swapped = optimal_margin(recs([(q, 1 - h) for q, h in low + high]))
    assert swapped.tau_star == pytest.approx(0.55) and swapped.delta_star == 1.0


def test_optimal_margin_ties_take_smallest_tau():
    rs = recs([(k / 20, 0.5) for k in range(20)])
    assert optimal_margin(rs).tau_star == pytest.approx(4.5 / 20)


def test_optimal_margin_infeasible():
    with pytest.raises(InfeasibleMarginError):
        optimal_margin(recs([(k / 10, 1) for k in range(9)]))
    with pytest.raises(InfeasibleMarginError):
        optimal_margin(recs([(1.0, 1)] * 12))


def random_records(rng):
    n = int(rng.integers(10, 60))
    q = rng.integers(0, 15, n) / 14  # plenty of ties
    h = rng.uniform(size=n)
    return recs(zip(q, h))


def test_optimal_margin_matches_oracle():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(100):
        rs = random_records(rng)
        expected = oracle_margin(rs, 5)
        if expected is None:
            with pytest.raises(InfeasibleMarginError):
                optimal_margin(rs, 5)
            continue
        got = optimal_margin(rs, 5)
        assert (got.tau_star, got.delta_star) == expected
        checked += 1
    assert checked > 80


def test_optimal_margin_increasing_transform():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rs = random_records(rng)
        if oracle_margin(rs, 5) is None:
            continue
        m = optimal_margin(rs, 5)
        g = [EvalRecord(r.window_id, r.sqi**3 / 2 + 0.1, r.metric) for r in rs]
        mg = optimal_margin(g, 5)
        assert mg.delta_star == m.delta_star
        assert (mg.above_count, mg.below_count) == (m.above_count, m.below_count)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0, 1)), min_size=2, max_size=40))
def test_binary_margin_equals_optimal_min_count_one(pairs):
    rs = recs(pairs)
    if len({r.sqi for r in rs}) < 2:
        return
    assert optimal_margin(rs, 1).delta_star == pytest.approx(binary_margin(rs), abs=1e-12)


# --- sweep -------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_corpus():
    windows = synth_corpus(SynthSpec(n_windows=12, snr_db=(0, 30)), seed=2)
    signals = [w.signal for w in windows]
    ids = [w.window_id for w in windows]
    metrics = [peak_f1(RPEAK_TASK.algorithm(w.signal), w.truth) for w in windows]
    return signals, ids, metrics


def test_sweep_single_cell_matches_direct(small_corpus):
    signals, ids, metrics = small_corpus
    cfg = PsqiConfig(master_seed=4)
    sweep = snr_sweep(signals, ids, metrics, RPEAK_TASK, [15.0], [0.0], cfg)
    direct_cfg = PsqiConfig(snr=SnrConfig(15.0, 0.0), master_seed=4)
    scores = [psqi_score(s, RPEAK_TASK, direct_cfg, w).score for s, w in zip(signals, ids)]
    cell = sweep.cells[0][0]
    assert cell.scores == scores
    if cell.margin is not None:
        assert cell.delta_star == optimal_margin(recs(zip(scores, metrics)), 5).delta_star
    else:
        assert cell.infeasible


def test_sweep_vanishing_perturbation_row_is_infeasible(small_corpus):
    signals, ids, metrics = small_corpus
    sweep = snr_sweep(signals, ids, metrics, RPEAK_TASK, [300.0], [-10.0, 10.0], PsqiConfig())
    assert len(sweep.cells) == 1 and len(sweep.cells[0]) == 2
    for cell in sweep.cells[0]:
        assert cell.infeasible and cell.delta_star is None
        assert all(s == 1.0 for s in cell.scores)
    assert sweep.argmax() is None
    assert sweep.matrix() == [[None, None]]
