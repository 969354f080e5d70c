"""Command-line entry point: ``avtpr {synth,prep,train,eval,report,verify}``.

All paths are relative to ``--out``::

    <out>/data/manifest.tsv, <out>/data/tensors/
    <out>/runs/<variant>/seed<k>/   pipeline.pt, model.cfg, history.json,
                                    train_log.jsonl, embeddings_{train,test}.npz,
                                    conditions.json
    <out>/report.txt, <out>/report.tsv
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_io
from .config import AVTNetConfig, RunConfig
from .data import DatasetManifest, ingest_directory, load_arrays
from .evaluation import ConditionReport, aggregate_reports, emit_report, evaluate_conditions, render_tables
from .synthetic import generate_synthetic_dataset
from .training import Pipeline, export_embeddings, train_pipeline
from .variants import VARIANTS
from .verify import run_all

log = logging.getLogger("avtpr")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=list(VARIANTS), default="Prop")
    p.add_argument("--toy", action="store_true", help="toy-scale shapes (64x64 images, 64 frames)")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="avtpr", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trimodal dataset")
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="fully valid samples per subject")

    p = sub.add_parser("prep", parents=[common], help="ingest real recordings, ablate and split")
    p.add_argument("--source", type=Path, required=True, help="tab-separated source manifest")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--resample", action="store_true", help="resample audio that is not 44 kHz")

    p = sub.add_parser("train", parents=[common], help="phase 1 + phase 2 for one variant")
    p.add_argument("--resume", action="store_true")

    sub.add_parser("eval", parents=[common], help="per-condition accuracy on the test split")
    sub.add_parser("report", parents=[common], help="aggregate every evaluated run into tables")
    sub.add_parser("verify", parents=[common], help="run the oracle and gradient property suites")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig(model=AVTNetConfig.toy() if args.toy else AVTNetConfig())
    if args.config:
        cfg = config_io.load(args.config, cfg)
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    if args.toy:
        cfg.train = replace(cfg.train, toy_scale=True)
    return cfg


def _run_dir(args, cfg: RunConfig) -> Path:
    return args.out / "runs" / args.variant / f"seed{cfg.train.seed}"


def _load_split(args, cfg: RunConfig, split: str):
    manifest = DatasetManifest.read(args.out / "data" / "manifest.tsv")
    model_cfg = replace(cfg.model, n_classes=manifest.n_classes)
    arrays = load_arrays(manifest.subset(split), model_cfg)
    if arrays.errors:
        raise ValueError(f"{len(arrays.errors)} {split} samples failed to load, "
                         f"e.g. {next(iter(arrays.errors.items()))}")
    return arrays, model_cfg


def cmd_synth(args, cfg: RunConfig) -> int:
    synth = replace(cfg.synth, **{k: v for k, v in (("n_subjects", args.subjects),
                                                     ("samples_per_subject", args.samples)) if v is not None})
    model_cfg = replace(cfg.model, n_classes=synth.n_subjects)
    ds = generate_synthetic_dataset(synth.n_subjects, synth.samples_per_subject, cfg.train.seed, model_cfg,
                                    synth, out_dir=args.out / "data")
    config_io.save(RunConfig(model=model_cfg, train=cfg.train, synth=synth), args.out / "data" / "data.cfg")
    n_test = sum(e.split == "test" for e in ds.manifest.entries)
    print(f"wrote {len(ds.manifest)} samples ({len(ds.manifest) - n_test} train / {n_test} test) "
          f"to {args.out / 'data'}")
    return 0


def cmd_prep(args, cfg: RunConfig) -> int:
    manifest = ingest_directory(args.source, args.out / "data", cfg.model, args.test_fraction,
                                cfg.train.seed, args.resample)
    print(f"wrote {len(manifest)} samples to {args.out / 'data'}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    train, model_cfg = _load_split(args, cfg, "train")
    run_dir = _run_dir(args, cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    pipeline = train_pipeline(args.variant, train, model_cfg, cfg.train, checkpoint_dir=run_dir,
                              resume=args.resume)
    pipeline.save(run_dir)
    config_io.save(RunConfig(model=model_cfg, train=cfg.train, synth=cfg.synth), run_dir / "run.cfg")
    with (run_dir / "train_log.jsonl").open("w") as fh:
        for phase, records in pipeline.history.items():
            if isinstance(records, list):
                for rec in records:
                    fh.write(json.dumps({"phase": phase, **rec}, sort_keys=True) + "\n")
    if pipeline.recognizer is not None:
        export_embeddings(pipeline.embedder, train).save(run_dir / "embeddings_train.npz")
    print(f"trained {args.variant} (seed {cfg.train.seed}) -> {run_dir}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    pipeline = Pipeline.load(run_dir)
    test, _ = _load_split(args, replace(cfg, model=pipeline.model_cfg), "test")
    if pipeline.recognizer is not None:
        export_embeddings(pipeline.embedder, test).save(run_dir / "embeddings_test.npz")
    report = evaluate_conditions(pipeline, test, seed=cfg.train.seed)
    (run_dir / "conditions.json").write_text(report.to_json())
    print(render_tables([report]), end="")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    paths = sorted((args.out / "runs").glob("*/seed*/conditions.json"))
    if not paths:
        print(f"no evaluated runs under {args.out / 'runs'}", file=sys.stderr)
        return 1
    reports = aggregate_reports([ConditionReport.from_json(p.read_text()) for p in paths])
    path = emit_report(reports, args.out)
    print(path.read_text(), end="")
    return 0


def cmd_verify(args, cfg: RunConfig) -> int:
    results = run_all(seed=cfg.train.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"synth": cmd_synth, "prep": cmd_prep, "train": cmd_train, "eval": cmd_eval,
            "report": cmd_report, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _run_config(args)
        return COMMANDS[args.command](args, cfg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"avtpr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
