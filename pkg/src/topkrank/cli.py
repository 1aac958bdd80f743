"""Command-line front end: ``run``, ``verify``, ``regret-scan`` and ``parse``."""

import argparse
import logging
import os
import sys

import numpy as np

from .data import parse_letor, prepare_corpus
from .exceptions import DataError, InvalidConfigError, InvalidInputError, UnsupportedSurrogateError
from .experiments import (
    ExperimentConfig,
    _parse_ints,
    _parse_synthetic,
    regret_scan,
    run_experiment,
    scan_csv,
    summary_text,
    trajectory_csv,
)
from .learner import BASELINES
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2

# flag name -> (config key, type); all default to "not given"
_FLAGS = {
    "--surrogate": ("surrogate", str),
    "--gamma": ("gamma", float),
    "--eta": ("eta", float),
    "--horizon": ("horizon", int),
    "--seed": ("seed", int),
    "--data": ("data", str),
    "--synthetic": ("synthetic", _parse_synthetic),
    "--out-dir": ("out_dir", str),
    "--radius": ("radius", float),
    "--epsilon": ("epsilon", float),
    "--data-seed": ("data_seed", int),
    "--baseline": ("baseline", str),
    "--horizons": ("horizons", _parse_ints),
    "--n-seeds": ("n_seeds", int),
    "--n-jobs": ("n_jobs", int),
}


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags given here override it")
    for flag, (key, kind) in _FLAGS.items():
        extra = {"choices": BASELINES} if key == "baseline" else {}
        common.add_argument(flag, dest=key, type=kind, default=argparse.SUPPRESS, **extra)
    common.add_argument("--comparator", dest="comparator", action="store_true",
                        default=argparse.SUPPRESS,
                        help="add best-in-hindsight regret to summary.txt")
    common.add_argument("--write-config", metavar="PATH",
                        help="save the resolved configuration and continue")
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="topkrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="play one game, write trajectory.csv and summary.txt")
    verify = sub.add_parser("verify", parents=[common], help="run a property suite")
    verify.add_argument("suite", choices=sorted(SUITES))
    sub.add_parser("regret-scan", parents=[common], help="mean regret per horizon, regret_scan.csv")
    parse = sub.add_parser("parse", parents=[common], help="dry-run a LETOR file")
    parse.add_argument("path", nargs="?", help="file to check (defaults to --data)")
    return parser


def resolve_config(args):
    """Defaults, then the config file, then explicit flags."""
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    overrides = {key: getattr(args, key) for key, _ in _FLAGS.values() if hasattr(args, key)}
    if hasattr(args, "comparator"):
        overrides["comparator"] = True
    return cfg.replace(**overrides) if overrides else cfg


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def cmd_run(cfg, out=sys.stdout):
    traj, summary = run_experiment(cfg)
    csv_path = _write(cfg.out_dir, "trajectory.csv", trajectory_csv(traj))
    _write(cfg.out_dir, "summary.txt", summary_text(summary))
    print(f"wrote {csv_path} ({len(traj)} rounds); final avg NDCG@{cfg.metric_cutoff} = "
          f"{summary['final_avg_ndcg_at_k']:.4f}", file=out)
    return EXIT_OK


def cmd_verify(cfg, suite, out=sys.stdout):
    results = run_suite(suite, seed=cfg.seed)
    for r in results:
        print(r.line(), file=out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}", file=out)
        return EXIT_FAILED
    print(f"all {len(results)} checks passed", file=out)
    return EXIT_OK


def cmd_regret_scan(cfg, out=sys.stdout):
    rows = regret_scan(cfg)
    path = _write(cfg.out_dir, "regret_scan.csv", scan_csv(rows))
    for row in rows:
        print(f"T={row['horizon']}: regret/T = {row['regret_per_round']:.4f}, "
              f"regret/T^(2/3) = {row['regret_per_t23']:.4f}", file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_parse(cfg, path, out=sys.stdout):
    path = path or cfg.data
    if path is None:
        raise InvalidConfigError("parse needs a file path or --data")
    corpus = parse_letor(path)
    prepared, stats = prepare_corpus(corpus, cfg.doc_radius, cfg.max_grade, cfg.max_docs)
    sizes = [q.m for q in corpus]
    grades = np.concatenate([q.grades for q in corpus]) if corpus else np.zeros(0, int)
    d = corpus[0].features.shape[1] if corpus else 0
    print(f"queries = {len(corpus)} ({len(prepared)} usable)", file=out)
    print(f"documents = {sum(sizes)}; per query min {min(sizes, default=0)}, "
          f"max {max(sizes, default=0)}", file=out)
    print(f"features = {d}", file=out)
    values, counts = np.unique(grades, return_counts=True)
    print("grades = " + ", ".join(f"{int(v)}:{int(c)}" for v, c in zip(values, counts)), file=out)
    print(f"rows rescaled to norm {cfg.doc_radius} = {stats.n_scaled} of {stats.n_rows} "
          f"(max norm {stats.max_norm_before:.4g})", file=out)
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.write_config:
            cfg.write(args.write_config)
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite, out)
        if args.command == "regret-scan":
            return cmd_regret_scan(cfg, out)
        return cmd_parse(cfg, args.path, out)
    except (InvalidConfigError, InvalidInputError, UnsupportedSurrogateError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
