"""Command-line front end.

    pclts gen-data  --dataset 1 --dim 1 --n 100 --outliers 0.2 --seed 7 --out data/
    pclts train     --data data/train.csv --out run/ [--test data/test.csv]
    pclts detect    --data data/train.csv
    pclts benchmark --out results.csv [--preset desk|full]

Every subcommand echoes its fully resolved configuration to stderr as a single
JSON line; feeding that line back through ``--config`` reproduces the run.
Exit status: 0 success, 1 usage error, 2 data or model error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as configmod
from .bench import rmse, run_matrix
from .datagen import generate, load_csv, save_csv
from .errors import ConfigurationError, PCLTSError
from .trainer import detect_outliers, train_robust

log = logging.getLogger("pclts")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# flag destination -> config key path
FLAG_KEYS = {
    "seed": ("seed",),
    "standardize": ("standardize",),
    "hidden": ("network", "hidden"),
    "C": ("loss", "C"),
    "B": ("loss", "B"),
    "a": ("loss", "a"),
    "s_floor": ("loss", "s_floor"),
    "method": ("optimizer", "method"),
    "restarts": ("optimizer", "restarts"),
    "budget": ("optimizer", "budget"),
    "init_box": ("optimizer", "init_box"),
    "tolerance": ("optimizer", "tolerance"),
    "population": ("optimizer", "population"),
    "finetune_steps": ("finetune", "steps"),
    "finetune_rate": ("finetune", "rate"),
    "finetune_method": ("finetune", "method"),
    "dataset": ("data", "dataset_id"),
    "dim": ("data", "m"),
    "n": ("data", "n"),
    "noise": ("data", "noise"),
    "outliers": ("data", "delta"),
    "preset": ("bench", "preset"),
    "repetitions": ("bench", "repetitions"),
    "seed_policy": ("bench", "seed_policy"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="count", default=0)


def _training(p):
    g = p.add_argument_group("training")
    g.add_argument("--hidden", type=int, help="hidden units")
    g.add_argument("--C", type=float, help="cleaning factor C >= 1")
    g.add_argument("--B", type=float, help="removal penalty B")
    g.add_argument("--a", type=float, help="transition width a > 0")
    g.add_argument("--s-floor", dest="s_floor", type=float)
    g.add_argument("--method", choices=["nelder_mead_restart", "differential_evolution"])
    g.add_argument("--restarts", type=int)
    g.add_argument("--budget", type=int, help="objective evaluations for Step I")
    g.add_argument("--init-box", dest="init_box", type=float)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--population", type=int)
    g.add_argument("--finetune-steps", dest="finetune_steps", type=int)
    g.add_argument("--finetune-rate", dest="finetune_rate", type=float)
    g.add_argument("--finetune-method", dest="finetune_method", choices=["bfgs", "gd"])
    g.add_argument("--standardize", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pclts", description="Robust neural-network regression with the PCLTS criterion.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write train/test CSVs for a synthetic data set")
    _common(p)
    p.add_argument("--dataset", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--outliers", type=float, help="proportion of rows replaced by outliers")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="robust training on a CSV")
    _common(p)
    _training(p)
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="optional test CSV scored by RMSE")
    p.add_argument("--out", required=True, help="output directory for model.json and report.json")

    p = sub.add_parser("detect", help="print the 0/1 outlier mask of a CSV")
    _common(p)
    _training(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("benchmark", help="run the benchmark matrix")
    _common(p)
    _training(p)
    p.add_argument("--preset", choices=["desk", "full"])
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed-policy", dest="seed_policy", choices=["per_repetition", "shared"])
    p.add_argument("--workers", type=int, help="parallel processes (default: $PCLTS_THREADS or 1)")
    p.add_argument("--out", required=True, help="results CSV")
    return parser


def _overrides(args) -> dict:
    out: dict = {}
    for dest, path in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return out


def _resolve(args) -> dict:
    file_cfg = configmod.load(args.config) if args.config else None
    return configmod.resolve(file_cfg, _overrides(args))


def _echo(cfg):
    print(f"# config: {configmod.dumps(cfg)}", file=sys.stderr)


def _cmd_gen_data(args, cfg):
    data = generate(configmod.synthetic_spec(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(data.train, out / "train.csv")
    save_csv(data.test, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({data.train.n} rows, {int(data.train.outlier_truth.sum())} outliers)")
    print(f"wrote {out / 'test.csv'} ({data.test.n} rows)")


def _stream(args):
    return sys.stderr if args.verbose >= 2 else None


def _cmd_train(args, cfg):
    data = load_csv(args.data)
    spec = configmod.train_spec(cfg, data.m)
    report = train_robust(data, spec, stream=_stream(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.params.save(out / "model.json")
    report.save(out / "report.json")
    print(f"removed {report.n_removed} of {data.n} rows (s = {report.scale:.6g})")
    print(f"step I {report.timings['step1']:.2f}s, step III {report.timings['step3']:.2f}s")
    if args.test:
        print(f"test RMSE {rmse(report.params, load_csv(args.test)):.6g}")
    print(f"wrote {out / 'model.json'} and {out / 'report.json'}")


def _cmd_detect(args, cfg):
    data = load_csv(args.data)
    flagged = detect_outliers(data, configmod.train_spec(cfg, data.m))
    print("".join("1" if v else "0" for v in flagged))


def _cmd_benchmark(args, cfg):
    spec = configmod.experiment_spec(cfg, output=args.out)
    workers = args.workers if args.workers is not None else int(os.environ.get("PCLTS_THREADS", "1") or 1)

    def progress(res):
        if res.error:
            log.warning("cell ds=%d m=%d n=%d delta=%g noise=%g failed: %s",
                        res.dataset_id, res.m, res.n, res.delta, res.noise, res.error)
        else:
            log.info("ds=%d m=%d n=%d delta=%g noise=%g  pclts=%.4g nnet=%.4g recall=%.3f",
                     res.dataset_id, res.m, res.n, res.delta, res.noise,
                     res.rmse_pclts, res.rmse_baseline, res.outlier_recall)

    results = run_matrix(spec, workers=max(1, workers), progress=progress)
    failed = sum(1 for r in results if r.error)
    print(f"wrote {len(results)} results to {args.out} ({failed} failed)")


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "benchmark": _cmd_benchmark,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        if "error:" in str(exc):
            print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose >= 2 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _resolve(args)
        _echo(cfg)
        COMMANDS[args.command](args, cfg)
    except ConfigurationError as exc:
        print(f"pclts: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PCLTSError as exc:
        print(f"pclts: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"pclts: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
