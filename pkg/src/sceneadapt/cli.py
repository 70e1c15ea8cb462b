"""Command-line surface: gen, train, eval, ablate, report.

Every subcommand echoes its effective configuration (file plus --seed,
--out, and --set overrides) into the output directory before doing any
work, and exits with a stable code: 0 success, 1 configuration error,
2 I/O error, 3 data or checkpoint error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import fileio
from .errors import CheckpointError, ConfigurationError, DataError
from .scenegen import GenConfig, generate_dataset
from .trainer import (ExperimentConfig, config_from_dict, evaluate_checkpoint,
                      run_ablation, train, write_report)

log = logging.getLogger("sceneadapt")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_DATA = 3


def _load_json_file(path: str) -> dict:
    """Read a JSON config, reporting parse failures with their line number."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: line {e.lineno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: expected a JSON object of config fields")
    return obj


def _coerce(cls, key: str, raw: str):
    """Convert a --set value to the type of the matching dataclass field."""
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigurationError(
            f"--set {key}: unknown field; {cls.__name__} has {', '.join(sorted(fields))}")
    kind = fields[key]
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(int(p) for p in raw.split(",") if p)
    except ValueError:
        raise ConfigurationError(f"--set {key}={raw}: not a valid {kind}") from None
    return raw


def _parse_sets(cls, pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set {pair!r}: expected key=value")
        out[key] = _coerce(cls, key, raw)
    return out


def _resolve_out(args) -> str | None:
    return os.environ.get("SCENEADAPT_OUT") or getattr(args, "out", None)


def _require_out(args) -> str:
    out = _resolve_out(args)
    if not out:
        raise ConfigurationError(
            "no output directory; pass --out or set SCENEADAPT_OUT")
    return out


# --------------------------------------------------------------- subcommands


def cmd_gen(args) -> int:
    out = _require_out(args)
    obj = _load_json_file(args.config) if args.config else {}
    known = {f.name for f in dataclasses.fields(GenConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigurationError(f"unknown gen config fields: {', '.join(unknown)}")
    if "scenes" in obj:
        obj["scenes"] = tuple(obj["scenes"])
    obj.update(_parse_sets(GenConfig, args.set))
    if args.seed is not None:
        obj["seed"] = args.seed
    config = GenConfig(**obj)

    os.makedirs(out, exist_ok=True)
    fileio.atomic_write_json(os.path.join(out, "gen_config.json"),
                             dataclasses.asdict(config))
    log.info("generating %d scenes x 2 views x %d frames at %dx%d into %s",
             len(config.scenes), config.frames_per_subset, config.width,
             config.height, out)
    manifest = generate_dataset(config, out, jobs=args.jobs)
    path = os.path.join(out, "manifest.json")
    print(f"{path}: {len(manifest.frames)} frames")
    return EXIT_OK


def cmd_train(args) -> int:
    obj = _load_json_file(args.config)
    obj.update(_parse_sets(ExperimentConfig, args.set))
    if args.seed is not None:
        obj["seed"] = args.seed
    out = _resolve_out(args)
    if out:
        obj["out_dir"] = out
    config = config_from_dict(obj)
    log.info("training %s %s->%s into %s", config.method, config.source,
             config.target, config.out_dir)
    train(config)
    with open(os.path.join(config.out_dir, "results.json"), encoding="utf-8") as f:
        results = json.load(f)
    final = results["final"]["target_test"]
    print(f"{config.out_dir}: {config.method} {config.source}->{config.target} "
          f"target test m_iou={final['m_iou']:.4f} c_acc={final['c_acc']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    result = evaluate_checkpoint(args.checkpoint, args.dataset, args.subset,
                                 args.split)
    obj = result.to_json_obj()
    out = _resolve_out(args)
    if out:
        os.makedirs(out, exist_ok=True)
        fileio.atomic_write_json(os.path.join(out, "eval.json"), obj)
    print(json.dumps(obj, indent=2))
    return EXIT_OK


def cmd_ablate(args) -> int:
    obj = _load_json_file(args.config)
    obj.update(_parse_sets(ExperimentConfig, args.set))
    if args.seed is not None:
        obj["seed"] = args.seed
    base = config_from_dict(obj)
    out = _require_out(args)
    os.makedirs(out, exist_ok=True)
    fileio.atomic_write_json(os.path.join(out, "ablate_config.json"),
                             base.to_json_obj())
    path = run_ablation(base, out)
    print(path)
    return EXIT_OK


def cmd_report(args) -> int:
    out = _require_out(args)
    for path in write_report(args.run_dirs, out):
        print(path)
    return EXIT_OK


# --------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneadapt",
        description="Desk-scale scene adaptation experiments: synthetic data, "
                    "training baselines, adversarial adaptation, and reports.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, config_help, config_required):
        p.add_argument("--config", required=config_required, help=config_help)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field (repeatable)")
        p.add_argument("--out", default=None,
                       help="output directory (SCENEADAPT_OUT wins over this)")

    p = sub.add_parser("gen", help="render a synthetic dataset")
    common(p, "JSON file of generator config fields", config_required=False)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for frame rendering")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run one training configuration")
    common(p, "JSON file of experiment config fields", config_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint's segmentation net")
    p.add_argument("checkpoint", help="path to a saved .ckpt file")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--subset", required=True, help="subset id, like B1")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", default=None,
                   help="also write eval.json here (SCENEADAPT_OUT wins)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the loss ablation grid")
    common(p, "JSON file with the base adaptation config", config_required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="merge finished runs into CSV tables")
    p.add_argument("run_dirs", nargs="+", help="run directories with results.json")
    p.add_argument("--out", default=None,
                   help="directory for the CSV tables (SCENEADAPT_OUT wins)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
