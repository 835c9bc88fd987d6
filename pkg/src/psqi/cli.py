"""Command-line interface: ``psqi <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .cmaes import CmaConfig
from .data import SynthSpec, load_dataset, synth_corpus, write_record, write_windows
from .engine import PsqiConfig, perturb_for, psqi_score, score_many
from .errors import DataError, InfeasibleMarginError, PsqiError, UndefinedCorrelationError
from .evaluation import (
    EvalRecord,
    binary_margin,
    binned_spearman,
    is_monotone,
    monotonicity_bins,
    optimal_margin,
    realized_metric,
    snr_sweep,
    spearman,
)
from .features import export_features, extract_features
from .rng import PRNG_ID
from .signal_core import SnrConfig
from .tasks import RPEAK_TASK, BinaryLabel, ExternalCommandSpec, PeakList, external_task

log = logging.getLogger("psqi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
SEED_MIXING = "blake2b-64(master_seed/window_id/stream)"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--gamma-db", type=float, default=25.0, help="minimum global SNR in dB")
    g.add_argument("--beta-db", type=float, default=10.0, help="minimum local SNR in dB")
    g.add_argument("--population", type=int, default=5)
    g.add_argument("--iterations", type=int, default=2)
    g.add_argument("--window-s", type=float, default=10.0)
    g.add_argument("--task", choices=("rpeaks", "external"), default="rpeaks")
    g.add_argument("--external-cmd", help="classifier command line for --task external")
    g.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    g.add_argument("--out", help="output file or directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psqi", description="Perturbation-based signal quality index.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    common = [_common()]

    p = sub.add_parser("synth", parents=common, help="generate a synthetic annotated corpus")
    p.add_argument("--n-windows", type=int, default=200)
    p.add_argument("--fs", type=float, default=250.0)
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=40.0)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--hr-min", type=float, default=50.0)
    p.add_argument("--hr-max", type=float, default=100.0)
    p.add_argument("--weak-fraction", type=float, default=0.0)

    p = sub.add_parser("score", parents=common, help="pSQI per window")
    p.add_argument("--data", required=True)

    p = sub.add_parser("evaluate", parents=common, help="bins, Spearman and separation margins")
    p.add_argument("--data", required=True)
    p.add_argument("--scores", help="score table from 'psqi score' (computed when omitted)")
    p.add_argument("--predictions", help="CSV window_id,prediction for binary tasks")
    p.add_argument("--n-bins", type=int, default=25)
    p.add_argument("--min-count", type=int, default=5)

    p = sub.add_parser("sweep", parents=common, help="separation margin over an SNR grid")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma-grid", type=float, nargs="+", default=[15.0, 25.0, 35.0])
    p.add_argument("--beta-grid", type=float, nargs="+", default=[-10.0, 10.0, 30.0])
    p.add_argument("--min-count", type=int, default=5)

    p = sub.add_parser("features", parents=common, help="export the feature table")
    p.add_argument("--data", required=True)

    p = sub.add_parser("perturb", parents=common, help="write the worst-case perturbed window")
    p.add_argument("--data", required=True)
    p.add_argument("--window", required=True, help="window id, e.g. synth_0003:0")
    return parser


# --- helpers -----------------------------------------------------------------


def _config(args) -> PsqiConfig:
    try:
        return PsqiConfig(
            snr=SnrConfig(args.gamma_db, args.beta_db),
            cma=CmaConfig(population=args.population, max_iterations=args.iterations),
            master_seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _binding(args):
    if args.task == "external":
        if not args.external_cmd:
            raise UsageError("--task external requires --external-cmd")
        return external_task(ExternalCommandSpec(tuple(shlex.split(args.external_cmd))))
    if args.external_cmd:
        raise UsageError("--external-cmd only applies to --task external")
    return RPEAK_TASK


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError(f"'{args.command}' needs --out")
    return Path(args.out)


def _jobs(args) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def _metadata(args, cfg: PsqiConfig | None = None, **extra) -> dict:
    meta = {
        "command": args.command,
        "version": __version__,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("jobs",)},
        "prng": PRNG_ID,
        "seed_mixing": SEED_MIXING,
    }
    if cfg is not None:
        meta["config"] = cfg.as_dict()
    meta.update(extra)
    return meta


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load(args, require=None):
    kind = {"rpeaks": "peaks", "external": "label"}[args.task] if require is None else require
    return load_dataset(args.data, window_s=args.window_s, require=kind or None)


SCORE_HEADER = (
    "window_id", "psqi", "degenerate", "worst_f_low_hz", "worst_f_high_hz",
    "failed_evaluations", "noise_seed", "cma_seed",
)


def _score_rows(windows, results):
    for w, r in zip(windows, results):
        theta = r.worst_theta
        yield [
            w.window_id, _fmt(r.score), _fmt(r.degenerate),
            _fmt(theta.f_low if theta else None), _fmt(theta.f_high if theta else None),
            sum(e.failed for e in r.evaluations), _fmt(r.noise_seed), _fmt(r.cma_seed),
        ]


def read_scores(path) -> dict:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "window_id" not in reader.fieldnames or "psqi" not in reader.fieldnames:
                raise DataError(f"{path}: expected columns window_id and psqi")
            out = {}
            for lineno, row in enumerate(reader, start=2):
                try:
                    out[row["window_id"]] = float(row["psqi"])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad psqi value {row['psqi']!r}") from exc
            return out
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_predictions(path) -> dict:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"window_id", "prediction"} <= set(reader.fieldnames):
                raise DataError(f"{path}: expected columns window_id and prediction")
            out = {}
            for lineno, row in enumerate(reader, start=2):
                try:
                    out[row["window_id"]] = BinaryLabel(int(row["prediction"]))
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: prediction must be 0 or 1") from exc
            return out
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _realized(args, binding, windows) -> list[float]:
    if args.task == "external" and getattr(args, "predictions", None):
        preds = read_predictions(args.predictions)
        missing = [w.window_id for w in windows if w.window_id not in preds]
        if missing:
            raise DataError(f"{args.predictions}: no prediction for {missing[0]}")
        return [binding.metric(preds[w.window_id], w.truth) for w in windows]
    return [realized_metric(binding, w.signal, w.truth) for w in windows]


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _require_out(args)
    spec = SynthSpec(
        n_windows=args.n_windows,
        fs=args.fs,
        window_s=args.window_s,
        hr_bpm=(args.hr_min, args.hr_max),
        snr_db=None if args.no_noise else (args.snr_min, args.snr_max),
        weak_fraction=args.weak_fraction,
    )
    windows = synth_corpus(spec, seed=args.seed)
    write_windows(out, windows)
    _write_json(out / "synth.json", _metadata(args, spec=asdict(spec), windows=[
        {"window_id": w.window_id, **w.meta} for w in windows
    ]))
    print(f"wrote {len(windows)} windows to {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    out = _require_out(args)
    cfg, binding = _config(args), _binding(args)
    windows = _load(args, require="")
    results = score_many([w.signal for w in windows], [w.window_id for w in windows], binding, cfg, jobs=_jobs(args))
    _write_csv(out, SCORE_HEADER, _score_rows(windows, results))
    _write_json(out.with_suffix(".json"), _metadata(args, cfg, n_windows=len(windows)))
    print(f"scored {len(windows)} windows -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _require_out(args)
    cfg, binding = _config(args), _binding(args)
    windows = _load(args)
    if args.scores:
        table = read_scores(args.scores)
        missing = [w.window_id for w in windows if w.window_id not in table]
        if missing:
            raise DataError(f"{args.scores}: no score for window {missing[0]}")
        scores = [table[w.window_id] for w in windows]
    else:
        results = score_many([w.signal for w in windows], [w.window_id for w in windows], binding, cfg, jobs=_jobs(args))
        scores = [r.score for r in results]
    metrics = _realized(args, binding, windows)
    records = [EvalRecord(w.window_id, s, m) for w, s, m in zip(windows, scores, metrics)]

    try:
        margin = optimal_margin(records, args.min_count)
    except InfeasibleMarginError as exc:
        raise InfeasibleMarginError(
            f"{exc}. The separation margin needs at least {args.min_count} windows on each side "
            f"of the threshold; supply at least {2 * args.min_count} windows with distinct scores "
            f"or lower --min-count."
        ) from exc
    bins = monotonicity_bins(records, args.n_bins)

    def _try(fn, *a):
        try:
            return fn(*a)
        except UndefinedCorrelationError:
            return None

    rho_records = _try(spearman, [r.sqi for r in records], [r.metric for r in records])
    rho_bins = _try(binned_spearman, bins) if len(bins) >= 2 else None
    bin_margin = None
    if all(r.sqi in (0.0, 1.0) for r in records) and {r.sqi for r in records} == {0.0, 1.0}:
        bin_margin = binary_margin(records)

    _write_csv(out / "records.csv", ("window_id", "sqi", "metric"),
               ([r.window_id, _fmt(r.sqi), _fmt(r.metric)] for r in records))
    _write_csv(out / "bins.csv", ("lower", "upper", "count", "mean_metric"),
               ([_fmt(b.lower), _fmt(b.upper), b.count, _fmt(b.mean_metric)] for b in bins))
    _write_csv(
        out / "margin.csv",
        ("tau_star", "delta_star", "above_mean", "below_mean", "above_count", "below_count",
         "spearman_records", "spearman_bins", "monotone", "binary_margin"),
        [[_fmt(margin.tau_star), _fmt(margin.delta_star), _fmt(margin.above_mean),
          _fmt(margin.below_mean), margin.above_count, margin.below_count,
          _fmt(rho_records), _fmt(rho_bins), _fmt(is_monotone(bins)), _fmt(bin_margin)]],
    )
    _write_json(out / "report.json", _metadata(
        args, cfg,
        n_windows=len(records),
        margin=asdict(margin),
        spearman_records=rho_records,
        spearman_bins=rho_bins,
        monotone=is_monotone(bins),
        binary_margin=bin_margin,
    ))
    print(f"delta* = {margin.delta_star:.6f} at tau = {margin.tau_star:.6f}; "
          f"spearman(records) = {rho_records}; report in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _require_out(args)
    cfg, binding = _config(args), _binding(args)
    windows = _load(args)
    metrics = _realized(args, binding, windows)
    result = snr_sweep(
        [w.signal for w in windows], [w.window_id for w in windows], metrics, binding,
        args.gamma_grid, args.beta_grid, cfg, min_count=args.min_count, jobs=_jobs(args),
    )
    rows = []
    for g, row in zip(result.gamma_grid, result.cells):
        rows.append([_fmt(g)] + [
            _fmt(c.delta_star) if c.delta_star is not None else ("infeasible" if c.infeasible else "error")
            for c in row
        ])
    _write_csv(out / "matrix.csv", ["gamma_db/beta_db"] + [_fmt(b) for b in result.beta_grid], rows)
    best = result.argmax()
    _write_json(out / "sweep.json", _metadata(
        args, cfg,
        gamma_grid=result.gamma_grid,
        beta_grid=result.beta_grid,
        argmax=None if best is None else {
            "gamma_db": result.gamma_grid[best[0]],
            "beta_db": result.beta_grid[best[1]],
            "delta_star": result.cells[best[0]][best[1]].delta_star,
        },
        cells=[
            {"gamma_db": c.gamma_db, "beta_db": c.beta_db, "delta_star": c.delta_star,
             "tau_star": c.margin.tau_star if c.margin else None,
             "infeasible": c.infeasible, "error": c.error}
            for row in result.cells for c in row
        ],
    ))
    print(f"sweep matrix ({len(result.gamma_grid)}x{len(result.beta_grid)}) -> {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    out = _require_out(args)
    binding = _binding(args)
    windows = _load(args, require="")
    rows = []
    for w in windows:
        metric = None
        if w.truth is not None:
            metric = realized_metric(binding, w.signal, w.truth)
        rows.append((w.window_id, extract_features(w.signal), metric))
    out.parent.mkdir(parents=True, exist_ok=True)
    export_features(rows, out)
    _write_json(out.with_suffix(".json"), _metadata(args, n_windows=len(rows)))
    print(f"wrote features for {len(rows)} windows -> {out}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    out = _require_out(args)
    cfg, binding = _config(args), _binding(args)
    windows = {w.window_id: w for w in _load(args, require="")}
    if args.window not in windows:
        raise DataError(f"no window {args.window!r} in {args.data}")
    w = windows[args.window]
    result = psqi_score(w.signal, binding, cfg, w.window_id)
    if result.degenerate:
        perturbed = w.signal
    else:
        perturbed = perturb_for(w.signal, result.worst_theta, cfg, w.window_id)
    name = out.name[: -len(".csv")] if out.name.endswith(".csv") else out.name
    write_record(out.parent, name, perturbed)
    theta = result.worst_theta
    _write_json(out.parent / f"{name}.perturb.json", _metadata(
        args, cfg,
        window_id=w.window_id,
        score=result.score,
        degenerate=result.degenerate,
        worst_theta=None if theta is None else {"f_low_hz": theta.f_low, "f_high_hz": theta.f_high},
        noise_seed=result.noise_seed,
        cma_seed=result.cma_seed,
    ))
    print(f"worst-case perturbation of {w.window_id} (q = {result.score:.6f}) -> {out.parent / (name + '.csv')}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "features": cmd_features,
    "perturb": cmd_perturb,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"psqi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"psqi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleMarginError as exc:
        print(f"psqi: infeasible margin: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PsqiError, OSError, ValueError) as exc:
        print(f"psqi: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
