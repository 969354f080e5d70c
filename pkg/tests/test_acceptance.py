"""Acceptance checks; each one records a line printed in the pytest summary."""

import time

import numpy as np
import pytest
import torch

from avtpr import verify
from avtpr.cli import main
from avtpr.config import AVTNetConfig, SynthConfig, TrainConfig
from avtpr.data import MODALITIES, ModalitySample, make_ablations, split_dataset
from avtpr.evaluation import ConditionReport, aggregate_reports, evaluate_conditions
from avtpr.mining import build_masks
from avtpr.synthetic import generate_synthetic_dataset
from avtpr.data import load_arrays
from avtpr.training import train_pipeline

from conftest import ACCEPTANCE

SEEDS = (0, 1, 2)


def record(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((num, bool(ok), detail))
    assert ok, detail


def test_criterion_1_mining_oracle():
    t0 = time.perf_counter()
    mm, th = verify.mining_oracle_errors(200, seed=0)
    dt = time.perf_counter() - t0
    record(1, mm < 1e-6 and th < 1e-6 and dt < 30,
           f"max |err| missing-modality {mm:.1e}, triplet-hard {th:.1e}; {dt:.1f}s (limit 30s)")


def test_criterion_2_masks():
    m = build_masks(torch.tensor([1, 1, 2]), torch.tensor([1, 0, 1]))
    expected = {
        "pos": [[1, 1, 0], [1, 1, 0], [0, 0, 1]],
        "valid": [[1, 0, 1], [0, 0, 0], [1, 0, 1]],
        "missing": [[0, 1, 0], [1, 1, 1], [0, 1, 0]],
        "pos_valid": [[0, 0, 0], [0, 0, 0], [0, 0, 0]],
        "neg": [[0, 0, 1], [0, 0, 1], [1, 1, 0]],
        "neg_valid": [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    }
    hand_ok = all(torch.equal(getattr(m, k), torch.tensor(v, dtype=torch.bool)) for k, v in expected.items())
    rng = np.random.default_rng(0)
    bad = set()
    for _ in range(1000):
        K = int(rng.integers(1, 17))
        bad.update(verify.mask_violations(rng.integers(0, 5, K), rng.integers(0, 2, K)))
    record(2, hand_ok and not bad,
           f"hand example {'matches' if hand_ok else 'differs'}; 1000 draws, violations: {sorted(bad) or 'none'}")


def test_criterion_3_gradients():
    t0 = time.perf_counter()
    gm, gt = verify.gradient_errors(50, seed=0)
    dt = time.perf_counter() - t0
    record(3, gm < 1e-4 and gt < 1e-4 and dt < 60,
           f"max rel err missing-modality {gm:.1e}, triplet-hard {gt:.1e}; {dt:.1f}s (limit 60s)")


def test_criterion_4_model_invariants():
    errs = verify.model_invariant_errors(seed=0)
    ok = errs["unit_norm"] < 1e-5 and errs["attention_rows"] < 1e-6 and errs["missing_point"] < 1e-6
    record(4, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def _run_variant(variant, seeds, synth=None):
    cfg = AVTNetConfig.toy()
    reports = []
    for seed in seeds:
        ds = generate_synthetic_dataset(8, 20, seed, cfg, synth)
        train = load_arrays(ds.manifest.subset("train"), cfg)
        test = load_arrays(ds.manifest.subset("test"), cfg)
        tcfg = TrainConfig(phase1_epochs=15, phase2_epochs=15, seed=seed, toy_scale=True)
        reports.append(evaluate_conditions(train_pipeline(variant, train, cfg, tcfg), test, seed))
    (agg,) = aggregate_reports(reports)
    return agg, len(ds.manifest)


@pytest.mark.slow
def test_criterion_5_smoke_experiment():
    t0 = time.perf_counter()
    agg, n_rows = _run_variant("Prop", SEEDS)
    dt = time.perf_counter() - t0
    acc = agg.accuracy
    ok = (n_rows == 640 and acc["no_missing"] >= 0.90
          and all(acc[c] >= 0.80 for c in ("miss_visible", "miss_thermal", "miss_audio")) and dt <= 600)
    cells = ", ".join(f"{k} {v:.3f}" for k, v in acc.items())
    record(5, ok, f"{n_rows} rows; 3-seed median {cells}; {dt:.0f}s (limit 600s)")


SKEWED = SynthConfig(noise=0.5, audio_noise=24.0, visible_noise=1.0, thermal_noise=16.0)


@pytest.mark.slow
def test_criterion_6_prop_vs_e2e_skewed():
    prop, _ = _run_variant("Prop", SEEDS, SKEWED)
    e2e, _ = _run_variant("E2E", SEEDS, SKEWED)
    record(6, prop.avg >= e2e.avg, f"median avg Prop {prop.avg:.3f} vs E2E {e2e.avg:.3f} (skewed noise)")


def test_criterion_7_report_fidelity(tmp_path):
    (tmp_path / "quick.cfg").write_text(
        "train.phase1_epochs = 2\ntrain.phase2_epochs = 2\nmodel.image_size = 32\nmodel.n_frames = 40\n"
        "synth.n_subjects = 4\nsynth.samples_per_subject = 6\n")
    base = ["--toy", "--seed", "3", "--out", str(tmp_path), "--config", str(tmp_path / "quick.cfg")]
    assert main(["synth", *base]) == 0
    assert main(["train", "--variant", "Prop", *base]) == 0

    outputs = []
    for _ in range(2):
        assert main(["eval", "--variant", "Prop", *base]) == 0
        assert main(["report", *base]) == 0
        outputs.append(tuple((tmp_path / f"report.{e}").read_bytes() for e in ("txt", "tsv")) +
                       ((tmp_path / "runs/Prop/seed3/conditions.json").read_bytes(),))
    text = outputs[0][0].decode()
    header = next(l for l in text.splitlines() if l.startswith("Algorithm"))
    columns_ok = [c.strip() for c in header.split("  ") if c.strip()] == [
        "Algorithm", "No-Missing", "Miss. Visible", "Miss. Thermal", "Miss. Audio", "Avg"]
    rows = outputs[0][1].decode().splitlines()
    cells = dict(zip(rows[0].split("\t"), rows[1].split("\t")))
    vals = [float(cells[c]) for c in ("no_missing", "miss_visible", "miss_thermal", "miss_audio")]
    avg_err = abs(float(cells["avg"]) - sum(vals) / 4)
    report = ConditionReport.from_json(outputs[0][2].decode())
    avg_err = max(avg_err, abs(report.avg - np.mean(list(report.accuracy.values()))))
    identical = outputs[0] == outputs[1]
    record(7, columns_ok and avg_err < 1e-9 and identical,
           f"columns {'ok' if columns_ok else 'wrong'}; |avg - mean| {avg_err:.1e}; "
           f"repeat runs {'byte-identical' if identical else 'differ'}")


def test_criterion_8_pipeline_counts():
    rng = np.random.default_rng(0)
    samples = [ModalitySample(f"x{i}", i % 3, rng.normal(size=(8, 5)), rng.random((4, 4, 3)) + 0.1,
                              rng.random((4, 4, 1)) + 0.1) for i in range(9)]
    ablated = [a for s in samples for a in make_ablations(s)]
    count_ok = len(ablated) == 4 * len(samples)
    zero_ok = all(not np.any(a.tensor(m)) for a in ablated for m, v in zip(MODALITIES, a.validity) if not v)
    kept_ok = all(np.any(a.tensor(m)) for a in ablated for m, v in zip(MODALITIES, a.validity) if v)

    cfg = AVTNetConfig.toy(image_size=16, n_frames=16, n_classes=3)
    m = generate_synthetic_dataset(3, 5, seed=11, cfg=cfg).manifest
    split = lambda s: [e.split for e in split_dataset(m, 0.2, s).entries]
    det_ok = split(4) == split(4) and split(4) != split(5)
    record(8, count_ok and zero_ok and kept_ok and det_ok and len(m) == 60,
           f"{len(samples)} -> {len(ablated)} samples; ablated tensors zero: {zero_ok}; "
           f"same seed same split: {split(4) == split(4)}")
