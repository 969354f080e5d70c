"""Seeded synthetic trimodal identities.

Each subject owns a latent identity: a stack of tones for audio, a smooth
colour texture for the visible image and a few warm blobs for the thermal
image. Samples are renderings of that identity plus noise, so any single
modality is enough to tell subjects apart when noise is low.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audio
from .config import AVTNetConfig, SynthConfig
from .data import DatasetManifest, ModalitySample, save_samples, split_dataset

N_TONES = 4
N_WAVES = 3
N_BLOBS = 3


@dataclass(frozen=True)
class Identity:
    tone_freqs: np.ndarray    # (N_TONES,) Hz
    tone_amps: np.ndarray
    tone_phases: np.ndarray
    wave_freqs: np.ndarray    # (3, N_WAVES, 2) cycles per image, per colour channel
    wave_phases: np.ndarray   # (3, N_WAVES)
    colour: np.ndarray        # (3,)
    blob_centres: np.ndarray  # (N_BLOBS, 2) in [0, 1]
    blob_widths: np.ndarray   # (N_BLOBS,)


def sample_identity(rng: np.random.Generator, n_mels: int) -> Identity:
    centres = audio.mel_band_centers(audio.SAMPLE_RATE, n_mels)
    bands = rng.choice(np.arange(n_mels // 16, n_mels - n_mels // 8), size=N_TONES, replace=False)
    return Identity(
        tone_freqs=centres[np.sort(bands)],
        tone_amps=rng.uniform(0.3, 1.0, N_TONES),
        tone_phases=rng.uniform(0, 2 * np.pi, N_TONES),
        wave_freqs=rng.uniform(0.5, 3.0, (3, N_WAVES, 2)) * rng.choice([-1, 1], (3, N_WAVES, 2)),
        wave_phases=rng.uniform(0, 2 * np.pi, (3, N_WAVES)),
        colour=rng.uniform(0.3, 0.7, 3),
        blob_centres=rng.uniform(0.2, 0.8, (N_BLOBS, 2)),
        blob_widths=rng.uniform(0.08, 0.2, N_BLOBS),
    )


def render_audio(ident: Identity, cfg: AVTNetConfig, rng: np.random.Generator, noise: float) -> np.ndarray:
    n = audio.frames_to_samples(cfg.n_frames)
    t = np.arange(n) / audio.SAMPLE_RATE
    phases = ident.tone_phases + noise * rng.normal(size=N_TONES)
    amps = ident.tone_amps * np.exp(0.3 * noise * rng.normal(size=N_TONES))
    wave = (amps[:, None] * np.sin(2 * np.pi * ident.tone_freqs[:, None] * t + phases[:, None])).sum(0)
    wave = wave + 0.3 * noise * rng.normal(size=n)
    spec = audio.compute_log_mel_spectrogram(wave, n_mels=cfg.n_mels, n_frames=cfg.n_frames)
    return audio.standardize(spec).astype(np.float32)


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ax = np.linspace(0.0, 1.0, size, endpoint=False)
    return np.meshgrid(ax, ax, indexing="ij")


def render_visible(ident: Identity, size: int, rng: np.random.Generator, noise: float) -> np.ndarray:
    yy, xx = _grid(size)
    img = np.empty((size, size, 3))
    for c in range(3):
        field = np.zeros((size, size))
        for w in range(N_WAVES):
            fy, fx = ident.wave_freqs[c, w]
            field += np.sin(2 * np.pi * (fy * yy + fx * xx) + ident.wave_phases[c, w])
        img[..., c] = ident.colour[c] + 0.12 * field
    img += 0.05 * noise * rng.normal()  # global brightness jitter
    img += 0.25 * noise * rng.normal(size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_thermal(ident: Identity, size: int, rng: np.random.Generator, noise: float) -> np.ndarray:
    yy, xx = _grid(size)
    heat = np.full((size, size), 0.15)
    for (cy, cx), w in zip(ident.blob_centres, ident.blob_widths):
        heat += 0.6 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w ** 2))
    heat += 0.25 * noise * rng.normal(size=heat.shape)
    return np.clip(heat, 0.0, 1.0)[..., None].astype(np.float32)


@dataclass
class SyntheticDataset:
    manifest: DatasetManifest
    samples: list[ModalitySample]
    identities: list[Identity]


def generate_synthetic_dataset(
    n_subjects: int,
    samples_per_subject: int,
    seed: int,
    cfg: AVTNetConfig | None = None,
    synth: SynthConfig | None = None,
    out_dir: str | Path | None = None,
) -> SyntheticDataset:
    """Render ``n_subjects * samples_per_subject`` fully valid samples.

    The returned manifest already holds the four ablation rows per sample and
    a stratified train/test split. Tensors are written under ``out_dir`` when
    given, otherwise kept in memory on the manifest.
    """
    if n_subjects < 2:
        raise ValueError("need at least 2 subjects")
    if samples_per_subject < 4:
        raise ValueError("need at least 4 samples per subject")
    cfg = cfg or AVTNetConfig.toy(n_classes=n_subjects)
    synth = synth or SynthConfig(n_subjects=n_subjects, samples_per_subject=samples_per_subject)

    rng = np.random.default_rng(seed)
    identities = [sample_identity(rng, cfg.n_mels) for _ in range(n_subjects)]
    samples = []
    for subject, ident in enumerate(identities):
        for k in range(samples_per_subject):
            samples.append(ModalitySample(
                sample_id=f"s{subject:03d}_{k:04d}",
                subject_id=subject,
                spectrogram=render_audio(ident, cfg, rng, synth.noise * synth.audio_noise),
                visible=render_visible(ident, cfg.image_size, rng, synth.noise * synth.visible_noise),
                thermal=render_thermal(ident, cfg.image_size, rng, synth.noise * synth.thermal_noise),
            ))

    manifest = save_samples(samples, out_dir, n_subjects, seed)
    manifest = split_dataset(manifest, synth.test_fraction, seed)
    if out_dir is not None:
        manifest.write(Path(out_dir) / "manifest.tsv")
    return SyntheticDataset(manifest, samples, identities)
