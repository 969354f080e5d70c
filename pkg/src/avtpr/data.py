"""Trimodal samples, zero-fill ablation, manifests and splits.

On-disk layout (all paths in the manifest are relative to its directory)::

    manifest.tsv
    tensors/<source_id>_audio.npy      float32 (n_mels, n_frames)
    tensors/<source_id>_visible.npy    float32 (H, W, 3) in [0, 1]
    tensors/<source_id>_thermal.npy    float32 (H, W, 1) in [0, 1]

Ablated rows leave the path of their missing modality empty; loaders
substitute an exact zero tensor for any row whose validity flag is 0.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import audio
from .config import AVTNetConfig

log = logging.getLogger(__name__)

MODALITIES = ("audio", "visible", "thermal")
ABLATION_SUFFIX = {"audio": "_noaud", "visible": "_novis", "thermal": "_nothm"}
MANIFEST_COLUMNS = ["sample_id", "subject_id", "audio_path", "visible_path", "thermal_path",
                    "b_audio", "b_visible", "b_thermal", "split"]


@dataclass
class ModalitySample:
    sample_id: str
    subject_id: int
    spectrogram: np.ndarray
    visible: np.ndarray
    thermal: np.ndarray
    validity: tuple[bool, bool, bool] = (True, True, True)

    def tensor(self, modality: str) -> np.ndarray:
        return {"audio": self.spectrogram, "visible": self.visible, "thermal": self.thermal}[modality]

    def validate(self, n_mels: int = 128, n_frames: int = 589, image_size: int = 224) -> None:
        if self.spectrogram.shape != (n_mels, n_frames):
            raise ValueError(f"{self.sample_id}: spectrogram shape {self.spectrogram.shape}")
        if self.visible.shape != (image_size, image_size, 3):
            raise ValueError(f"{self.sample_id}: visible shape {self.visible.shape}")
        if self.thermal.shape != (image_size, image_size, 1):
            raise ValueError(f"{self.sample_id}: thermal shape {self.thermal.shape}")
        if sum(not v for v in self.validity) > 1:
            raise ValueError(f"{self.sample_id}: more than one missing modality")
        for m, ok in zip(MODALITIES, self.validity):
            if not ok and np.any(self.tensor(m)):
                raise ValueError(f"{self.sample_id}: {m} flagged missing but not zero")


def make_ablations(sample: ModalitySample) -> list[ModalitySample]:
    """[original, audio-ablated, visible-ablated, thermal-ablated]."""
    if not all(sample.validity):
        raise ValueError(f"{sample.sample_id}: ablation needs a fully valid sample")
    out = [sample]
    for k, m in enumerate(MODALITIES):
        validity = tuple(j != k for j in range(3))
        zeroed = {"audio": "spectrogram"}.get(m, m)
        out.append(replace(
            sample,
            sample_id=sample.sample_id + ABLATION_SUFFIX[m],
            validity=validity,
            **{zeroed: np.zeros_like(sample.tensor(m))},
        ))
    return out


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    subject_id: int
    paths: tuple[str, str, str]
    validity: tuple[bool, bool, bool]
    split: str = "train"


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    n_classes: int
    seed: int = 0
    root: Path | None = field(default=None, compare=False)
    # relative path -> array, for datasets that were never written to disk
    store: dict[str, np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample_id in manifest")
        for e in self.entries:
            if not 0 <= e.subject_id < self.n_classes:
                raise ValueError(f"{e.sample_id}: subject {e.subject_id} outside [0, {self.n_classes})")
            if e.split not in ("train", "test"):
                raise ValueError(f"{e.sample_id}: bad split tag {e.split!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == split], self.n_classes, self.seed,
                               self.root, self.store)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# n_classes={self.n_classes} seed={self.seed}\n")
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            for e in self.entries:
                writer.writerow([e.sample_id, e.subject_id, *e.paths, *(int(v) for v in e.validity), e.split])

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        with path.open(newline="") as fh:
            first = fh.readline()
            meta = dict(kv.split("=") for kv in first.lstrip("#").split()) if first.startswith("#") else {}
            if not first.startswith("#"):
                fh.seek(0)
            reader = csv.DictReader(fh, delimiter="\t")
            if reader.fieldnames != MANIFEST_COLUMNS:
                raise ValueError(f"{path}: header must be {MANIFEST_COLUMNS}")
            entries = [
                ManifestEntry(
                    sample_id=row["sample_id"],
                    subject_id=int(row["subject_id"]),
                    paths=(row["audio_path"], row["visible_path"], row["thermal_path"]),
                    validity=(row["b_audio"] == "1", row["b_visible"] == "1", row["b_thermal"] == "1"),
                    split=row["split"],
                )
                for row in reader
            ]
        n_classes = int(meta["n_classes"]) if "n_classes" in meta else max(e.subject_id for e in entries) + 1
        return cls(entries, n_classes, int(meta.get("seed", 0)), root=path.parent)


def split_dataset(manifest: DatasetManifest, test_fraction: float, seed: int) -> DatasetManifest:
    """Stratified random split; every subject lands in both splits."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    by_subject: dict[int, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        by_subject.setdefault(e.subject_id, []).append(i)

    test_idx: set[int] = set()
    for subject in sorted(by_subject):
        idx = by_subject[subject]
        if len(idx) < 2:
            raise ValueError(f"subject {subject} has fewer than 2 samples; cannot stratify")
        n_test = int(np.clip(round(len(idx) * test_fraction), 1, len(idx) - 1))
        test_idx.update(rng.permutation(idx)[:n_test].tolist())

    entries = [replace(e, split="test" if i in test_idx else "train") for i, e in enumerate(manifest.entries)]
    return DatasetManifest(entries, manifest.n_classes, seed, manifest.root, manifest.store)


def save_samples(
    samples: list[ModalitySample],
    root: str | Path | None,
    n_classes: int,
    seed: int = 0,
) -> DatasetManifest:
    """Store fully valid samples' tensors; emit rows for them and their ablations.

    With ``root=None`` tensors stay in memory on ``manifest.store``.
    Returned entries all carry split ``train``; call :func:`split_dataset` next.
    """
    store: dict[str, np.ndarray] | None = None
    if root is None:
        store = {}
    else:
        root = Path(root)
        (root / "tensors").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        paths = []
        for m in MODALITIES:
            rel = f"tensors/{s.sample_id}_{m}.npy"
            arr = s.tensor(m).astype(np.float32)
            if store is None:
                np.save(root / rel, arr)
            else:
                store[rel] = arr
            paths.append(rel)
        for ab in make_ablations(s):
            entries.append(ManifestEntry(
                sample_id=ab.sample_id,
                subject_id=ab.subject_id,
                paths=tuple(p if ok else "" for p, ok in zip(paths, ab.validity)),
                validity=ab.validity,
            ))
    return DatasetManifest(entries, n_classes, seed, root, store)


@dataclass
class TrimodalArrays:
    """Stacked, model-ready arrays for a manifest (or a split of it)."""

    sample_ids: list[str]
    labels: np.ndarray          # (N,) int64
    validity: np.ndarray        # (N, 3) bool, columns audio/visible/thermal
    spectrogram: np.ndarray     # (N, n_mels, n_frames) float32
    visible: np.ndarray         # (N, H, W, 3) float32
    thermal: np.ndarray         # (N, H, W, 1) float32
    errors: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def take(self, idx) -> "TrimodalArrays":
        idx = np.asarray(idx)
        return TrimodalArrays(
            [self.sample_ids[i] for i in idx], self.labels[idx], self.validity[idx],
            self.spectrogram[idx], self.visible[idx], self.thermal[idx],
        )


def load_arrays(manifest: DatasetManifest, cfg: AVTNetConfig, root: str | Path | None = None) -> TrimodalArrays:
    """Load every row; invalid modalities become exact zeros.

    Rows whose files cannot be read are reported in ``errors`` and dropped.
    """
    root = Path(root or manifest.root or ".")
    shapes = {
        "audio": (cfg.n_mels, cfg.n_frames),
        "visible": (cfg.image_size, cfg.image_size, 3),
        "thermal": (cfg.image_size, cfg.image_size, 1),
    }
    cache: dict[str, np.ndarray] = dict(manifest.store or {})
    ids, labels, validity = [], [], []
    stacks = {m: [] for m in MODALITIES}
    errors: dict[str, str] = {}
    for e in manifest.entries:
        try:
            row = {}
            for m, rel, ok in zip(MODALITIES, e.paths, e.validity):
                if not ok:
                    row[m] = np.zeros(shapes[m], dtype=np.float32)
                    continue
                if rel not in cache:
                    cache[rel] = np.load(root / rel).astype(np.float32)
                arr = cache[rel]
                if arr.shape != shapes[m]:
                    raise ValueError(f"{m} shape {arr.shape}, expected {shapes[m]}")
                row[m] = arr
        except (OSError, ValueError) as exc:
            errors[e.sample_id] = str(exc)
            log.warning("skipping %s: %s", e.sample_id, exc)
            continue
        ids.append(e.sample_id)
        labels.append(e.subject_id)
        validity.append(e.validity)
        for m in MODALITIES:
            stacks[m].append(row[m])

    def stack(m):
        return np.stack(stacks[m]) if stacks[m] else np.zeros((0, *shapes[m]), np.float32)

    return TrimodalArrays(
        ids, np.asarray(labels, dtype=np.int64), np.asarray(validity, dtype=bool).reshape(-1, 3),
        stack("audio"), stack("visible"), stack("thermal"), errors,
    )


def _load_image(path: Path, size: int, channels: int) -> np.ndarray:
    from PIL import Image

    if path.suffix == ".npy":
        arr = np.load(path).astype(np.float32)
        if arr.ndim == 2:
            arr = arr[..., None]
        if arr.max() > 1.0:
            arr = arr / 255.0
        if channels == 1 and arr.shape[-1] != 1:
            arr = arr.mean(axis=-1, keepdims=True)
        planes = [np.asarray(Image.fromarray(arr[..., c], mode="F").resize((size, size), Image.BILINEAR))
                  for c in range(channels)]
        return np.clip(np.stack(planes, axis=-1), 0.0, 1.0)
    img = Image.open(path).convert("L" if channels == 1 else "RGB").resize((size, size), Image.BILINEAR)
    return (np.asarray(img, dtype=np.float32) / 255.0).reshape(size, size, channels)


def _load_audio(path: Path, cfg: AVTNetConfig, resample: bool) -> np.ndarray:
    if path.suffix == ".npy":
        wave, rate = np.load(path), audio.SAMPLE_RATE
    else:
        from scipy.io import wavfile

        rate, wave = wavfile.read(path)
        if wave.ndim > 1:
            wave = wave.mean(axis=1)
        if np.issubdtype(wave.dtype, np.integer):
            wave = wave / np.iinfo(wave.dtype).max
    spec = audio.compute_log_mel_spectrogram(wave, rate, n_mels=cfg.n_mels, n_frames=cfg.n_frames,
                                             resample=resample)
    return audio.standardize(spec)


def ingest_directory(
    source_manifest: str | Path,
    out_dir: str | Path,
    cfg: AVTNetConfig,
    test_fraction: float = 0.2,
    seed: int = 0,
    resample: bool = False,
) -> DatasetManifest:
    """Turn a table of raw recordings into an ablated, split dataset.

    ``source_manifest`` is a tab-separated file with header
    ``sample_id subject_id audio_path visible_path thermal_path``; paths are
    relative to its directory. Audio may be ``.wav`` or a ``.npy`` waveform at
    44 kHz; images anything PIL opens, or ``.npy``.
    """
    source_manifest = Path(source_manifest)
    base = source_manifest.parent
    samples = []
    with source_manifest.open(newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            s = ModalitySample(
                sample_id=row["sample_id"],
                subject_id=int(row["subject_id"]),
                spectrogram=_load_audio(base / row["audio_path"], cfg, resample).astype(np.float32),
                visible=_load_image(base / row["visible_path"], cfg.image_size, 3),
                thermal=_load_image(base / row["thermal_path"], cfg.image_size, 1),
            )
            s.validate(cfg.n_mels, cfg.n_frames, cfg.image_size)
            samples.append(s)
    if not samples:
        raise ValueError(f"{source_manifest}: no samples")
    n_classes = max(s.subject_id for s in samples) + 1
    manifest = save_samples(samples, out_dir, n_classes, seed)
    manifest = split_dataset(manifest, test_fraction, seed)
    manifest.write(Path(out_dir) / "manifest.tsv")
    return manifest
