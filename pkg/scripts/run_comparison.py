#!/usr/bin/env python3
"""Compare variants when audio and thermal carry much less identity signal than visible.

The default noise multipliers make the visible stream nearly clean and the other two
streams noisy, so dropping the visible camera hurts a lot. Example:

    python scripts/run_comparison.py --variants Prop E2E --out results/skewed
"""

import argparse
from pathlib import Path

from avtpr.config import SynthConfig
from avtpr.evaluation import emit_report, render_tables

from run_smoke_experiment import run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", nargs="+", default=["Prop", "E2E"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--noise", type=float, default=0.5)
    ap.add_argument("--audio-noise", type=float, default=24.0)
    ap.add_argument("--visible-noise", type=float, default=1.0)
    ap.add_argument("--thermal-noise", type=float, default=16.0)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    synth = SynthConfig(noise=args.noise, audio_noise=args.audio_noise, visible_noise=args.visible_noise,
                        thermal_noise=args.thermal_noise)
    reports = run(args.variants, args.seeds, 8, 20, 15, 15, synth)
    print(render_tables(reports), end="")
    if args.out:
        emit_report(reports, args.out)


if __name__ == "__main__":
    main()
