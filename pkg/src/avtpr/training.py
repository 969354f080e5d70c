"""Two-phase training: embedding network first, then a recognizer on frozen embeddings."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import config as config_io
from .config import AVTNetConfig, RunConfig, TrainConfig
from .data import MODALITIES, TrimodalArrays
from .losses import LossBreakdown
from .model import AVTNet, Recognizer
from .variants import VariantConfig, build_variant, embedding_loss, get_variant

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOSS_SLOTS = ("visible", "thermal", "audio", "joint")


def to_inputs(arrays: TrimodalArrays, idx=None) -> dict[str, torch.Tensor]:
    sel = slice(None) if idx is None else np.asarray(idx)
    return {
        "audio": torch.from_numpy(np.ascontiguousarray(arrays.spectrogram[sel])),
        "visible": torch.from_numpy(np.ascontiguousarray(arrays.visible[sel])),
        "thermal": torch.from_numpy(np.ascontiguousarray(arrays.thermal[sel])),
    }


def batch_indices(
    labels: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
    stratified: bool = True,
    per_class: int = 4,
) -> list[np.ndarray]:
    """One epoch of batches.

    The stratified mode packs shuffled groups of ``per_class`` same-subject
    samples, so every batch has positives and several classes.
    """
    n = len(labels)
    if not stratified:
        order = rng.permutation(n)
        batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    else:
        groups = []
        for c in np.unique(labels):
            idx = rng.permutation(np.flatnonzero(labels == c))
            groups += [idx[i:i + per_class] for i in range(0, len(idx), per_class)]
        order = rng.permutation(len(groups))
        batches, current = [], []
        for g in order:
            current.extend(groups[g].tolist())
            if len(current) >= batch_size:
                batches.append(np.asarray(current[:batch_size]))
                current = current[batch_size:]
        if current:
            batches.append(np.asarray(current))
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def state_checksum(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _make_optimizer(params, tcfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(params, lr=tcfg.lr, betas=(tcfg.beta1, tcfg.beta2))


def compute_breakdown(
    bundle,
    labels: torch.Tensor,
    validity: torch.Tensor,
    variant: VariantConfig,
    margin: float,
) -> LossBreakdown:
    zero = next(iter(bundle.embeddings.values())).sum() * 0.0
    terms = dict.fromkeys(LOSS_SLOTS, zero)
    for name, X in bundle.embeddings.items():
        if name == "joint":
            terms[name] = embedding_loss(variant.joint_loss, X, labels, None, margin)
        else:
            B = validity[:, MODALITIES.index(name)]
            terms[name] = embedding_loss(variant.individual_loss, X, labels, B, margin)
    return LossBreakdown(**terms)


def train_embeddings(
    model: AVTNet,
    arrays: TrimodalArrays,
    variant: VariantConfig,
    tcfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    resume: bool = False,
) -> list[dict]:
    """Phase 1. Returns one record per epoch with the four loss terms and timing."""
    opt = _make_optimizer(model.parameters(), tcfg)
    history: list[dict] = []
    start_epoch = 0
    ckpt = Path(checkpoint_dir) / "phase1.pt" if checkpoint_dir else None
    if resume and ckpt is not None and ckpt.exists():
        state = torch.load(ckpt, weights_only=False)
        model.load_state_dict(state["model"])
        opt.load_state_dict(state["optimizer"])
        history = state["history"]
        start_epoch = state["epoch"]
        log.info("resumed phase 1 at epoch %d", start_epoch)

    labels_all = torch.from_numpy(arrays.labels)
    validity_all = torch.from_numpy(arrays.validity)
    model.train()
    for epoch in range(start_epoch, tcfg.phase1_epochs):
        rng = np.random.default_rng([tcfg.seed, epoch])
        t0 = time.perf_counter()
        sums = dict.fromkeys(("L_c", "L_t", "L_s", "L_j", "L_total"), 0.0)
        steps = skipped = 0
        for idx in batch_indices(arrays.labels, tcfg.batch_size, rng, tcfg.stratified, tcfg.samples_per_class):
            labels = labels_all[idx]
            if len(torch.unique(labels)) < 2:
                skipped += 1
                continue
            bundle = model(to_inputs(arrays, idx))
            losses = compute_breakdown(bundle, labels, validity_all[idx], variant, tcfg.margin)
            total = losses.total
            if not torch.isfinite(total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            total.backward()
            opt.step()
            for k, v in losses.as_floats().items():
                sums[k] += v
            steps += 1
        if skipped:
            log.warning("epoch %d: skipped %d single-class batches", epoch, skipped)
        record = {k: v / max(steps, 1) for k, v in sums.items()}
        record.update(epoch=epoch, steps=steps, skipped=skipped, seconds=time.perf_counter() - t0)
        history.append(record)
        log.info("phase1 epoch %d %s", epoch, {k: round(v, 4) for k, v in record.items() if k.startswith("L_")})
        done = epoch + 1
        if ckpt is not None and (done % tcfg.checkpoint_every == 0 or done == tcfg.phase1_epochs):
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            torch.save({"version": CHECKPOINT_VERSION, "model": model.state_dict(),
                        "optimizer": opt.state_dict(), "history": history, "epoch": done}, ckpt)
    return history


@dataclass
class EmbeddingTable:
    sample_ids: list[str]
    labels: np.ndarray
    validity: np.ndarray
    embeddings: dict[str, np.ndarray]
    errors: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def matrix(self, names: tuple[str, ...] | None = None) -> np.ndarray:
        names = names or tuple(self.embeddings)
        return np.concatenate([self.embeddings[n] for n in names], axis=1)

    def save(self, path: str | Path) -> None:
        """``.npz`` with sample_id, subject_id, validity and one ``emb_<head>`` array per head."""
        np.savez(path, sample_id=np.asarray(self.sample_ids), subject_id=self.labels, validity=self.validity,
                 **{f"emb_{k}": v for k, v in self.embeddings.items()})

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        with np.load(path) as z:
            emb = {k[4:]: z[k] for k in z.files if k.startswith("emb_")}
            return cls(z["sample_id"].tolist(), z["subject_id"], z["validity"], emb)


@torch.no_grad()
def export_embeddings(model: AVTNet, arrays: TrimodalArrays, batch_size: int = 64) -> EmbeddingTable:
    was_training = model.training
    model.eval()
    chunks: dict[str, list[np.ndarray]] = {n: [] for n in model.embedding_names}
    for start in range(0, len(arrays), batch_size):
        idx = np.arange(start, min(start + batch_size, len(arrays)))
        bundle = model(to_inputs(arrays, idx))
        for n in chunks:
            chunks[n].append(bundle.embeddings[n].cpu().numpy())
    model.train(was_training)
    emb = {n: np.concatenate(c) if c else np.zeros((0, model.cfg.embed_dim), np.float32) for n, c in chunks.items()}
    return EmbeddingTable(list(arrays.sample_ids), arrays.labels.copy(), arrays.validity.copy(), emb,
                          dict(arrays.errors))


def _fit_classifier(
    module: nn.Module,
    forward,
    labels: np.ndarray,
    n: int,
    epochs: int,
    tcfg: TrainConfig,
    rng_tag: int,
) -> list[dict]:
    opt = _make_optimizer(module.parameters(), tcfg)
    y_all = torch.from_numpy(labels)
    history = []
    module.train()
    for epoch in range(epochs):
        rng = np.random.default_rng([tcfg.seed, rng_tag, epoch])
        t0 = time.perf_counter()
        loss_sum = correct = seen = 0
        for idx in batch_indices(labels, tcfg.batch_size, rng, stratified=False):
            logits = forward(idx)
            y = y_all[idx]
            loss = F.cross_entropy(logits, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int((logits.argmax(1) == y).sum())
            seen += len(idx)
        history.append({"epoch": epoch, "loss": loss_sum / seen, "accuracy": correct / seen,
                        "seconds": time.perf_counter() - t0})
        log.info("classifier epoch %d loss %.4f acc %.4f", epoch, history[-1]["loss"], history[-1]["accuracy"])
    module.eval()
    return history


def train_recognizer(recognizer: Recognizer, table: EmbeddingTable, names: tuple[str, ...],
                     tcfg: TrainConfig) -> list[dict]:
    """Phase 2: cross-entropy on frozen embeddings."""
    missing = set(range(recognizer.n_classes)) - set(np.unique(table.labels).tolist())
    if missing:
        raise ValueError(f"classes {sorted(missing)} absent from the training embeddings")
    X = torch.from_numpy(table.matrix(names).astype(np.float32))
    if X.shape[1] != recognizer.in_dim:
        raise ValueError(f"embedding width {X.shape[1]} != recognizer input {recognizer.in_dim}")
    return _fit_classifier(recognizer, lambda idx: recognizer(X[idx]), table.labels, len(table),
                           tcfg.phase2_epochs, tcfg, rng_tag=2)


def train_end_to_end(classifier: nn.Module, arrays: TrimodalArrays, tcfg: TrainConfig) -> list[dict]:
    """Cross-entropy straight through the feature branches, for ``phase1 + phase2`` epochs."""
    return _fit_classifier(classifier, lambda idx: classifier(to_inputs(arrays, idx)), arrays.labels,
                           len(arrays), tcfg.phase1_epochs + tcfg.phase2_epochs, tcfg, rng_tag=3)


@dataclass
class Pipeline:
    """A trained variant: embedder + recognizer, or a single end-to-end classifier."""

    variant: VariantConfig
    model_cfg: AVTNetConfig
    embedder: nn.Module
    recognizer: Recognizer | None
    history: dict = field(default_factory=dict)

    @torch.no_grad()
    def predict(self, arrays: TrimodalArrays, batch_size: int = 64) -> np.ndarray:
        self.embedder.eval()
        if self.recognizer is None:
            out = [self.embedder(to_inputs(arrays, np.arange(s, min(s + batch_size, len(arrays))))).argmax(1)
                   for s in range(0, len(arrays), batch_size)]
            return torch.cat(out).numpy() if out else np.zeros(0, np.int64)
        self.recognizer.eval()
        table = export_embeddings(self.embedder, arrays, batch_size)
        X = torch.from_numpy(table.matrix(self.embedder.embedding_names).astype(np.float32))
        return self.recognizer(X).argmax(1).numpy()

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save({
            "version": CHECKPOINT_VERSION,
            "variant": asdict(self.variant),
            "embedder": self.embedder.state_dict(),
            "recognizer": None if self.recognizer is None else self.recognizer.state_dict(),
        }, directory / "pipeline.pt")
        config_io.save(RunConfig(model=self.model_cfg), directory / "model.cfg")
        (directory / "history.json").write_text(json.dumps(self.history, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory: str | Path) -> "Pipeline":
        directory = Path(directory)
        state = torch.load(directory / "pipeline.pt", weights_only=False)
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {state.get('version')}")
        variant = VariantConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in state["variant"].items()})
        model_cfg = config_io.load(directory / "model.cfg").model
        embedder, recognizer = build_variant(variant, model_cfg)
        embedder.load_state_dict(state["embedder"])
        if recognizer is not None:
            recognizer.load_state_dict(state["recognizer"])
            recognizer.eval()
        embedder.eval()
        hist_path = directory / "history.json"
        history = json.loads(hist_path.read_text()) if hist_path.exists() else {}
        return cls(variant, model_cfg, embedder, recognizer, history)


def train_pipeline(
    variant: VariantConfig | str,
    train_arrays: TrimodalArrays,
    model_cfg: AVTNetConfig,
    tcfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    resume: bool = False,
) -> Pipeline:
    if isinstance(variant, str):
        variant = get_variant(variant)
    torch.manual_seed(tcfg.seed)
    embedder, recognizer = build_variant(variant, model_cfg)
    if recognizer is None:
        hist = train_end_to_end(embedder, train_arrays, tcfg)
        return Pipeline(variant, model_cfg, embedder, None, {"end_to_end": hist})

    phase1 = train_embeddings(embedder, train_arrays, variant, tcfg, checkpoint_dir, resume)
    frozen = state_checksum(embedder)
    for p in embedder.parameters():
        p.requires_grad_(False)
    table = export_embeddings(embedder, train_arrays)
    phase2 = train_recognizer(recognizer, table, embedder.embedding_names, tcfg)
    if state_checksum(embedder) != frozen:
        raise RuntimeError("embedding network changed during recognizer training")
    return Pipeline(variant, model_cfg, embedder, recognizer,
                    {"phase1": phase1, "phase2": phase2, "embedder_sha256": frozen})
