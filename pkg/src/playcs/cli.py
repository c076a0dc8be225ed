"""``playcs`` command line: generate datasets, run trackers, sweep SNR x M."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .dataset_io import DatasetFormatError, dataset_digest, load_dataset, save_dataset
from .harness import ExperimentError, derive_spec, run_experiment, run_sweep
from .metrics import MetricSeries, to_db
from .signals import generate

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

SERIES_COLUMNS = ("slot", "method", "nmse", "corr")
SUMMARY_COLUMNS = ("method", "tnmse", "tcorr", "tnmse_db")
SWEEP_COLUMNS = ("snr_db", "m", "method", "mean_tnmse", "mean_tcorr", "se_tnmse", "se_tcorr", "trials")

log = logging.getLogger("playcs")


class NumericalFailure(RuntimeError):
    pass


def fmt(v):
    """12 significant digits; integers and special values print plainly."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if v == 0:
        return "0"
    return format(v, ".12g")


def _header(digest):
    return [f"# playcs {__version__}", f"# config-digest: {digest}"]


def write_table(path, columns, rows, digest):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for line in _header(digest):
            f.write(line + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path):
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def series_rows(results):
    for name, s in results.items():
        for t, (n, c) in enumerate(zip(s.nmse, s.corr), start=1):
            yield t, name, n, c


def summary_rows(results):
    for name, s in results.items():
        yield name, s.tnmse, s.tcorr, to_db(s.tnmse)


def _dataset_path(args, cfg):
    if args.dataset:
        return Path(args.dataset)
    if cfg.dataset_path:
        return Path(cfg.dataset_path)
    return Path(_out_dir(args, cfg)) / "dataset.npz"


def _out_dir(args, cfg):
    return Path(args.out or cfg.out_dir)


def cmd_generate(args):
    cfg = load_config(args.config, args.seed)
    ds = generate(cfg.scenario)
    path = _dataset_path(args, cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(path, ds)
    print(f"{dataset_digest(ds)}  {path}")
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config, args.seed)
    if args.dataset:
        ds = load_dataset(args.dataset)
    else:
        ds = generate(cfg.scenario)
    results, failed = {}, []
    for method in cfg.methods:
        try:
            results.update(run_experiment(ds, [method]))
        except ExperimentError as exc:
            log.error("%s", exc)
            failed.append(method.name)
    out = _out_dir(args, cfg)
    write_table(out / "series.csv", SERIES_COLUMNS, series_rows(results), cfg.digest)
    write_table(out / "summary.csv", SUMMARY_COLUMNS, summary_rows(results), cfg.digest)
    for row in summary_rows(results):
        log.info("%-16s tnmse=%s tcorr=%s (%s dB)", *(fmt(v) for v in row))
    if failed:
        raise NumericalFailure(f"methods failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config, args.seed)
    if cfg.sweep is None:
        raise ConfigError("sweep: section required for the sweep command")
    res = run_sweep(cfg.scenario, cfg.sweep.snr_list, cfg.sweep.m_list, cfg.sweep.trials,
                    cfg.methods, workers=args.workers)
    rows = ((snr, m, name, s.mean_tnmse, s.mean_tcorr, s.se_tnmse, s.se_tcorr, s.trials)
            for snr, m, name, s in res.records())
    write_table(_out_dir(args, cfg) / "sweep.csv", SWEEP_COLUMNS, rows, cfg.digest)
    if res.failures:
        for key, msg in sorted(res.failures.items()):
            log.error("cell snr=%s m=%s failed: %s", key[0], key[1], msg)
        raise NumericalFailure(f"{len(res.failures)} sweep cell(s) failed")
    return EXIT_OK


def cmd_report(args):
    """Re-aggregate one or more series files into a summary table."""
    grouped = {}
    for path in args.series:
        for row in read_table(path):
            grouped.setdefault(row["method"], ([], []))
            grouped[row["method"]][0].append(float(row["nmse"]))
            grouped[row["method"]][1].append(float(row["corr"]))
    results = {name: MetricSeries(name, np.array(n), np.array(c)) for name, (n, c) in grouped.items()}
    digest = "report:" + ",".join(os.path.basename(p) for p in args.series)
    out = Path(args.out or ".")
    write_table(out / "summary.csv", SUMMARY_COLUMNS, summary_rows(results), digest)
    return EXIT_OK


def derived_dataset_spec(cfg, i_snr=0, i_m=0, trial=0):
    """Scenario the sweep uses for one cell/trial (handy for cross-checking ``run``)."""
    sw = cfg.sweep
    return derive_spec(cfg.scenario, sw.snr_list, sw.m_list, i_snr, i_m, trial, sw.trials)


def build_parser():
    p = argparse.ArgumentParser(prog="playcs", description=__doc__)
    p.add_argument("--version", action="version", version=f"playcs {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--dataset", help="dataset file (.npz)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the scenario seed (u64)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for sweeps")
    common.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a dataset file").set_defaults(func=cmd_generate)
    sub.add_parser("run", parents=[common], help="run methods on one dataset").set_defaults(func=cmd_run)
    sub.add_parser("sweep", parents=[common], help="SNR x M Monte-Carlo grid").set_defaults(func=cmd_sweep)
    rep = sub.add_parser("report", parents=[common], help="summarize series files")
    rep.add_argument("series", nargs="+")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command != "report" and not args.config:
        parser.error("--config is required")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, ExperimentError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
