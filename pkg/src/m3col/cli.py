"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .ablation import ABLATION_MODES, EXTRA_MODES, run_ablation
from .data import generate_synthetic, load_dataset, write_dataset
from .errors import ContractError, IngestionError, M3colError, NumericalError, ShapeError
from .eval import corrupt_modality_eval
from .model import load_checkpoint
from .pipeline import dump_json, evaluate, model_inputs, run, seed_streams, write_artifacts
from .verify import DEFAULT_TOL, gradcheck_suite

log = logging.getLogger("m3col")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_train(args) -> int:
    try:
        cfg = config_mod.resolve(args.config, args.set, seed=args.seed, out=args.out)
        rc = config_mod.build(cfg)
        data = load_dataset(rc.manifest) if rc.manifest else generate_synthetic(rc.synthetic)
    except (config_mod.ConfigError, IngestionError) as exc:
        return _fail(str(exc), EXIT_USAGE)

    def progress(rec):
        if rec["epoch"] % max(1, rc.train.epochs // 10) == 0:
            log.info("epoch %d  phase=%s  total=%.4f  train_acc=%.3f",
                     rec["epoch"], rec["phase"], rec["total"], rec["train_acc"])

    try:
        outcome = run(rc, data, progress)
    except NumericalError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    paths = write_artifacts(outcome, rc.out_dir)
    fused = outcome.metrics["test"]["fused"]
    print(f"test acc {fused['acc']:.4f}; report written to {paths['report']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model, stats, meta = load_checkpoint(args.checkpoint)
        train_raw, test_raw = load_dataset(args.manifest)
    except (OSError, ContractError, IngestionError, KeyError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    batch = train_raw if args.split == "train" else test_raw
    if batch.widths != list(model.dims.input_dims) or batch.num_classes > model.dims.num_classes:
        return _fail(f"checkpoint expects widths {list(model.dims.input_dims)} and "
                     f"{model.dims.num_classes} classes, dataset has {batch.widths} and {batch.num_classes}",
                     EXIT_USAGE)
    batch.num_classes = model.dims.num_classes
    standardized = bool(meta["extra"].get("standardized", False))
    report = {"checkpoint": str(args.checkpoint), "split": args.split,
              **evaluate(model, model_inputs(batch, stats, standardized))}
    if args.corrupt is not None:
        target = args.corrupt
        if target != "all" and target.isdigit():
            target = int(target)
        _, _, probe_rng = seed_streams(args.seed)
        try:
            rep = corrupt_modality_eval(model, batch, stats, target, probe_rng,
                                        stats if standardized else None)
        except ContractError as exc:
            return _fail(str(exc), EXIT_USAGE)
        report["corruption"] = {"target": args.corrupt, "fused": rep.to_dict()}
    text = dump_json(report)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rows = gradcheck_suite(tol=args.tol, seed=args.seed)
    width = max(len(r.name) for r in rows)
    print(f"{'loss':<{width}}  {'max rel err':>12}  status")
    for r in rows:
        print(f"{r.name:<{width}}  {r.error:>12.3e}  {'ok' if r.ok else 'FAIL'}")
    bad = [r.name for r in rows if not r.ok]
    if bad:
        print(f"{len(bad)} loss(es) above tolerance {args.tol:g}: {', '.join(bad)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_ablate(args) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        return _fail(f"--seeds must be comma-separated integers, got '{args.seeds}'", EXIT_USAGE)
    if not seeds:
        return _fail("need at least one seed", EXIT_USAGE)
    modes = args.modes.split(",") if args.modes else list(ABLATION_MODES)
    unknown = [m for m in modes if m not in ABLATION_MODES and m not in EXTRA_MODES]
    if unknown:
        return _fail(f"unknown mode(s): {', '.join(unknown)}", EXIT_USAGE)
    try:
        cfg = config_mod.resolve(args.config, args.set, out=args.out)
        config_mod.build(cfg)
        table = run_ablation(cfg, seeds, modes, jobs=args.jobs)
    except (config_mod.ConfigError, IngestionError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    except NumericalError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    print(table.format())
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(dump_json({"config": cfg, "seeds": seeds, "modes": modes,
                                                  "runs": table.rows, "summary": table.summary()}))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        syn = config_mod.synthetic_from_file(args.config)
        if args.seed is not None:
            syn.seed = args.seed
        train, test = generate_synthetic(syn)
        path = write_dataset(args.out, train, test, extra={"generator": syn.to_dict()})
    except config_mod.ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail(f"cannot write dataset: {exc}", EXIT_USAGE)
    print(f"wrote {len(train)} train / {len(test)} test samples, manifest {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="m3col", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model and write checkpoint, curves and report")
    p.add_argument("--config", required=True, help="YAML path or preset:{rosmap,brca,synthetic}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (else ${config_mod.OUT_DIR_ENV}/<name>, else config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint, optionally with corrupted modalities")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--corrupt", metavar="MODALITY|all", help="replace a modality (or all) with matched noise")
    p.add_argument("--seed", type=int, default=0, help="noise seed for --corrupt")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every loss")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="accepted for symmetry with other commands; unused")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", parents=[common], help="compare training variants over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated, e.g. 0,1,2,3,4")
    p.add_argument("--modes", help=f"subset of {','.join([*ABLATION_MODES, *EXTRA_MODES])}")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset with manifest")
    p.add_argument("--config", required=True, help="synthetic generator YAML, run config, or preset:synthetic")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ShapeError, M3colError) as exc:
        return _fail(str(exc), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
