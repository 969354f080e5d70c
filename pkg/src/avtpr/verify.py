"""Randomized oracle, mask, gradient and model-invariant checks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from . import oracles
from .config import AVTNetConfig
from .losses import missing_modality_loss, triplet_hard_loss
from .mining import build_masks
from .model import AVTNet


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def random_batch(rng: np.random.Generator, k_range=(4, 16), d_range=(2, 16), c_range=(2, 5), p_missing=0.3):
    K = int(rng.integers(k_range[0], k_range[1] + 1))
    D = int(rng.integers(d_range[0], d_range[1] + 1))
    C = int(rng.integers(c_range[0], c_range[1] + 1))
    X = rng.normal(size=(K, D))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y = rng.integers(0, C, size=K)
    B = (rng.random(K) >= p_missing).astype(np.int64)
    return X, Y, B


def mining_oracle_errors(n_batches: int = 200, seed: int = 0) -> tuple[float, float]:
    """Max abs deviation of (missing-modality, triplet-hard) from the loop oracles."""
    rng = np.random.default_rng(seed)
    worst_mm = worst_th = 0.0
    for _ in range(n_batches):
        X, Y, B = random_batch(rng)
        Xt = torch.from_numpy(X)
        mm = missing_modality_loss(Xt, torch.from_numpy(Y), torch.from_numpy(B)).item()
        th = triplet_hard_loss(Xt, torch.from_numpy(Y)).item()
        worst_mm = max(worst_mm, abs(mm - oracles.missing_modality_loss(X, Y, B)))
        worst_th = max(worst_th, abs(th - oracles.triplet_hard_loss(X, Y)))
    return worst_mm, worst_th


def mask_violations(Y: np.ndarray, B: np.ndarray) -> list[str]:
    m = build_masks(torch.from_numpy(Y), torch.from_numpy(B))
    K = len(Y)
    eye = torch.eye(K, dtype=torch.bool)
    same = torch.from_numpy(Y[:, None] == Y[None, :])
    both = torch.from_numpy(B.astype(bool)[:, None] & B.astype(bool)[None, :])
    checks = {
        "A_p definition": torch.equal(m.pos, same),
        "A_v definition": torch.equal(m.valid, both),
        "A_m = NOT A_v": torch.equal(m.missing, ~m.valid),
        "A_n = NOT A_p": torch.equal(m.neg, ~m.pos),
        "A_pv = A_p AND A_v, zero diagonal": torch.equal(m.pos_valid, m.pos & m.valid & ~eye),
        "A_nv = A_n AND A_v": torch.equal(m.neg_valid, m.neg & m.valid),
        "A_p symmetric": torch.equal(m.pos, m.pos.T),
        "A_v symmetric": torch.equal(m.valid, m.valid.T),
        "A_pv AND A_nv = 0": not (m.pos_valid & m.neg_valid).any(),
        "A_pv OR A_nv <= A_v": not ((m.pos_valid | m.neg_valid) & ~m.valid).any(),
    }
    return [name for name, ok in checks.items() if not ok]


def _near_tie(X: np.ndarray, Y: np.ndarray, B: np.ndarray, gap: float) -> bool:
    """True if any hard-mining choice is decided by less than ``gap``."""
    P = oracles.distance_matrix(X)
    K = len(Y)
    for i in range(K):
        cand_sets = [
            [P[i, j] for j in range(K) if j != i and Y[j] == Y[i]],
            [P[i, j] for j in range(K) if Y[j] != Y[i]],
            [P[i, j] for j in range(K) if j != i and Y[j] == Y[i] and B[j] and B[i]],
            [P[i, j] for j in range(K) if Y[j] != Y[i] and B[j] and B[i]],
            [P[i, j] for j in range(K) if j != i and not B[j]],
        ]
        for c in cand_sets:
            c = sorted(c)
            if len(c) >= 2 and (c[1] - c[0] < gap or c[-1] - c[-2] < gap):
                return True
    return False


def gradient_errors(n_batches: int = 50, seed: int = 0, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative error of autograd vs central differences for both losses."""
    rng = np.random.default_rng(seed)
    worst = [0.0, 0.0]
    done = 0
    while done < n_batches:
        X, Y, B = random_batch(rng, k_range=(4, 8), d_range=(2, 16))
        if _near_tie(X, Y, B, gap=1e-3):
            continue
        Yt, Bt = torch.from_numpy(Y), torch.from_numpy(B)
        fns = [
            lambda Z: missing_modality_loss(Z, Yt, Bt),
            lambda Z: triplet_hard_loss(Z, Yt, margin=0.2),
        ]
        for k, fn in enumerate(fns):
            Xt = torch.tensor(X, dtype=torch.float64, requires_grad=True)
            (g,) = torch.autograd.grad(fn(Xt), Xt, allow_unused=True)
            g = np.zeros_like(X) if g is None else g.numpy()
            fd = oracles.central_difference_grad(lambda Z: fn(torch.from_numpy(Z)).item(), X, h)
            scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-8)
            worst[k] = max(worst[k], float(np.linalg.norm(g - fd) / scale))
        done += 1
    return worst[0], worst[1]


def model_invariant_errors(seed: int = 0, batch: int = 6) -> dict[str, float]:
    """Deviations of unit norm, attention row sums and shared missing embeddings."""
    torch.manual_seed(seed)
    cfg = AVTNetConfig.toy(image_size=32, n_frames=40)
    model = AVTNet(cfg).double().eval()
    g = torch.Generator().manual_seed(seed)
    inputs = {
        "audio": torch.randn(batch, cfg.n_mels, cfg.n_frames, generator=g, dtype=torch.float64),
        "visible": torch.rand(batch, cfg.image_size, cfg.image_size, 3, generator=g, dtype=torch.float64),
        "thermal": torch.rand(batch, cfg.image_size, cfg.image_size, 1, generator=g, dtype=torch.float64),
    }
    # first half misses visible, second half misses audio
    half = batch // 2
    inputs["visible"][:half] = 0
    inputs["audio"][half:] = 0
    with torch.no_grad():
        out = model(inputs)
    norm_err = max(float((e.norm(dim=1) - 1).abs().max()) for e in out.embeddings.values())
    attn = out.attention
    attn_err = float((attn.sum(-1) - 1).abs().max())
    attn_neg = float(torch.clamp(-attn, min=0).max())
    ev = out.embeddings["visible"][:half]
    ea = out.embeddings["audio"][half:]
    em_err = max(float((ev - ev[0]).abs().max()), float((ea - ea[0]).abs().max()))
    return {"unit_norm": norm_err, "attention_rows": max(attn_err, attn_neg), "missing_point": em_err}


def run_all(seed: int = 0) -> list[CheckResult]:
    results = []

    t0 = time.perf_counter()
    mm, th = mining_oracle_errors(200, seed)
    results.append(CheckResult("mining oracle (200 batches)", mm < 1e-6 and th < 1e-6,
                               f"max |err| missing-modality {mm:.2e}, triplet-hard {th:.2e}", time.perf_counter() - t0))

    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad = set()
    for _ in range(1000):
        K = int(rng.integers(1, 17))
        bad.update(mask_violations(rng.integers(0, 5, K), rng.integers(0, 2, K)))
    results.append(CheckResult("mask algebra (1000 draws)", not bad,
                               "all invariants hold" if not bad else "violated: " + ", ".join(sorted(bad)),
                               time.perf_counter() - t0))

    t0 = time.perf_counter()
    gm, gt = gradient_errors(50, seed)
    results.append(CheckResult("finite-difference gradients (50 batches)", gm < 1e-4 and gt < 1e-4,
                               f"max rel err missing-modality {gm:.2e}, triplet-hard {gt:.2e}",
                               time.perf_counter() - t0))

    t0 = time.perf_counter()
    errs = model_invariant_errors(seed)
    ok = errs["unit_norm"] < 1e-5 and errs["attention_rows"] < 1e-6 and errs["missing_point"] < 1e-6
    results.append(CheckResult("model invariants", ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()),
                               time.perf_counter() - t0))
    return results
