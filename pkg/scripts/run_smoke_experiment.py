#!/usr/bin/env python3
"""Toy-scale Prop run on the 8-subject synthetic set, median over seeds.

    python scripts/run_smoke_experiment.py --seeds 0 1 2 --out results/smoke
"""

import argparse
import time
from pathlib import Path

from avtpr.config import AVTNetConfig, SynthConfig, TrainConfig
from avtpr.data import load_arrays
from avtpr.evaluation import aggregate_reports, emit_report, evaluate_conditions, render_tables
from avtpr.synthetic import generate_synthetic_dataset
from avtpr.training import train_pipeline


def run(variants, seeds, subjects, samples, phase1, phase2, synth=None):
    cfg = AVTNetConfig.toy(n_classes=subjects)
    reports = []
    for seed in seeds:
        ds = generate_synthetic_dataset(subjects, samples, seed, cfg, synth)
        train = load_arrays(ds.manifest.subset("train"), cfg)
        test = load_arrays(ds.manifest.subset("test"), cfg)
        for variant in variants:
            t0 = time.perf_counter()
            tcfg = TrainConfig(phase1_epochs=phase1, phase2_epochs=phase2, seed=seed, toy_scale=True)
            report = evaluate_conditions(train_pipeline(variant, train, cfg, tcfg), test, seed)
            print(f"seed {seed} {variant:8s} avg {report.avg:.3f} ({time.perf_counter() - t0:.0f}s)", flush=True)
            reports.append(report)
    return aggregate_reports(reports)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", nargs="+", default=["Prop"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--subjects", type=int, default=8)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--phase1", type=int, default=15)
    ap.add_argument("--phase2", type=int, default=15)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    reports = run(args.variants, args.seeds, args.subjects, args.samples, args.phase1, args.phase2)
    print(render_tables(reports), end="")
    if args.out:
        emit_report(reports, args.out)


if __name__ == "__main__":
    main()
