"""Command line: ``train``, ``eval``, ``bench``, ``ablate``, ``gen-data``.

Every RunConfig field is a kebab-case flag. ``--config FILE`` loads a JSON
object with the same field names; flags given on the command line win, and
``TT_SEED`` overrides the seed last. Exit codes: 0 success, 2 configuration
error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

from ..data import generate_synthetic, load_corpus, write_hash_format, write_jsonl
from ..errors import ConfigError, DataError
from .ablate import VARIANTS, ablate, ablation_csv
from .bench import DEFAULT_SWEEP, bench, parse_sweep, rows_to_csv
from .checkpoint import Checkpoint
from .config import RunConfig, apply_env, long_distance_overrides
from .train import evaluate, load_splits, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("tt_aste")


def _flag_type(f: dataclasses.Field):
    hint = typing.get_type_hints(RunConfig)[f.name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    base = args[0] if args else hint
    if base is list or typing.get_origin(base) is list:
        return json.loads
    return base


def add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    g = p.add_argument_group("run configuration")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = _flag_type(f)
        if kind is bool:
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
        else:
            g.add_argument(flag, dest=f.name, type=kind, default=argparse.SUPPRESS, metavar=f.name.upper())


def resolve_config(args: argparse.Namespace) -> RunConfig:
    names = set(RunConfig.field_names())
    overrides = {k: v for k, v in vars(args).items() if k in names}
    cfg = RunConfig.from_file(args.config, overrides) if args.config else RunConfig.from_dict(overrides)
    return apply_env(cfg)


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    res = train(cfg)
    out = Path(cfg.output or "tt_model.ckpt")
    res.checkpoint.save(out)
    log_path = out.with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for row in res.log:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    summary = {"checkpoint": str(out), "log": str(log_path), "best_epoch": res.best_epoch,
               "best_dev": res.best_dev.to_dict() if res.best_dev else None}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = RunConfig.from_dict(ckpt.config)
    if args.corpus:
        records = list(load_corpus(args.corpus))
    else:
        records = load_splits(cfg).test
    report = evaluate(ckpt, records, cfg)
    _write(json.dumps(report.to_dict(), indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    sweep = parse_sweep(args.sweep) if args.sweep else DEFAULT_SWEEP
    rows = bench(sweep, cfg.heads, cfg.d_prime, args.reps, cfg.seed, cfg.wrap)
    _write(rows_to_csv(rows), args.csv)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    variants = args.variants.split(",") if args.variants else None
    for v in variants or []:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
    rows = ablate(cfg, variants)
    _write(ablation_csv(rows), args.csv)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    if args.preset == "long-distance":
        cfg = cfg.replace(**long_distance_overrides(cfg.b, cfg.synth_sentences))
    corpus = generate_synthetic(cfg.synth_config())
    if args.format == "hash":
        write_hash_format(corpus, args.out)
    else:
        write_jsonl(corpus, args.out)
    print(f"wrote {len(corpus)} sentences to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tt-aste", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and save the best-dev checkpoint")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", help="JSONL or #### file; default is the configured test split")
    p.add_argument("--output", help="write the report JSON here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="attention cost sweep as CSV")
    add_config_flags(p)
    p.add_argument("--sweep", help="comma-separated n:b:w points")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--csv", help="output path (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="train the ablation variants and compare")
    add_config_flags(p)
    p.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    p.add_argument("--csv", help="output path (default stdout)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-data", help="write a synthetic corpus")
    add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "hash"), default="jsonl")
    p.add_argument("--preset", choices=("default", "long-distance"), default="default")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
