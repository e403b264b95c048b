"""Command-line entry point ``bench``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace

import numpy as np

from . import oracles
from .bench import (
    RAW,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    ratio_table,
    run_experiment,
    sweep_features,
    sweep_fraction,
    write_results,
)
from .data import check_known_statistics, convert_npz, load_dataset, save_dataset


def _csv_list(cast):
    def parse(text):
        return [RAW if item == RAW else cast(item) for item in text.split(",") if item]

    return parse


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, n_trials=args.trials)
    return cfg


def _report(result, written):
    ratios = ratio_table(result)
    for (dataset, dim, frac), ratio in sorted(ratios.items(), key=str):
        print(f"{dataset} sketch_dim={dim} frac={frac}: N_obs/D = {ratio:.2f}")
    for key, stat in result.summary.items():
        ci = "n/a" if stat.ci95 is None else f"{100 * stat.ci95:.1f}"
        failed = f" ({stat.n_failed} failed)" if stat.n_failed else ""
        print(f"{key[0]:>10} {key[1]:>10} dim={key[2]} frac={key[3]} "
              f"acc={100 * stat.mean:.1f} +- {ci} n={stat.n}{failed}")
    for path in written:
        print(f"wrote {path}")


def cmd_run(args):
    cfg = _load_config(args)
    result = run_experiment(cfg, threads=args.threads)
    _report(result, write_results(result, args.out))


def cmd_sweep_features(args):
    cfg = _load_config(args)
    result = sweep_features(cfg, dims=args.dims, frac=args.frac, threads=args.threads)
    _report(result, write_results(result, args.out, curves="features"))


def cmd_sweep_fraction(args):
    cfg = _load_config(args)
    result = sweep_fraction(cfg, fracs=args.fracs, dim=args.dim, threads=args.threads)
    _report(result, write_results(result, args.out, curves="fraction"))


def cmd_validate(args):
    ds = load_dataset(args.directory, check_statistics=False)
    known = check_known_statistics(ds)
    counts = ", ".join(str(c) for c in np.bincount(ds.labels, minlength=ds.n_classes))
    print(f"{ds.name}: N={ds.n_nodes} D={ds.n_features} C={ds.n_classes} "
          f"edges={ds.graph.nnz // 2} class sizes=[{counts}]")
    if not known:
        print("warning: statistics differ from the reference benchmark version")


def cmd_selftest(args):
    failed = 0
    for check in oracles.ALL_CHECKS:
        start = time.perf_counter()
        res = check()
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"[{status}] {res.name} ({time.perf_counter() - start:.1f}s): {res.detail}")
    return 1 if failed else 0


def cmd_convert(args):
    ds = convert_npz(args.npz, name=args.name, largest_cc=not args.keep_all)
    save_dataset(ds, args.out)
    print(f"{ds.name}: N={ds.n_nodes} D={ds.n_features} C={ds.n_classes} -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--trials", type=int, help="override n_trials")

    p = sub.add_parser("run", help="run every configured cell")
    experiment_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-features", help="vary sketch dimension at fixed observed fraction")
    experiment_args(p)
    p.add_argument("--dims", type=_csv_list(int), help="comma-separated sketch dimensions")
    p.add_argument("--frac", type=float, default=0.5)
    p.set_defaults(func=cmd_sweep_features)

    p = sub.add_parser("sweep-fraction", help="vary observed fraction at fixed sketch dimension")
    experiment_args(p)
    p.add_argument("--fracs", type=_csv_list(float), help="comma-separated fractions")
    p.add_argument("--dim", type=lambda s: s if s == RAW else int(s), default=300)
    p.set_defaults(func=cmd_sweep_fraction)

    p = sub.add_parser("validate-dataset", help="load and check a dataset directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("selftest", help="run the oracle suite on synthetic data")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("convert-npz", help="convert a CSR .npz citation graph to a dataset directory")
    p.add_argument("npz")
    p.add_argument("out")
    p.add_argument("--name")
    p.add_argument("--keep-all", action="store_true", help="keep all components")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, ExperimentError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
