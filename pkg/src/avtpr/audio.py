"""Log-mel spectrograms with numpy only."""

from __future__ import annotations

import numpy as np
from scipy.signal import resample_poly

SAMPLE_RATE = 44_000
N_MELS = 128
N_FRAMES = 589
N_FFT = 2048
HOP = 512
LOG_EPS = 1e-6


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_band_centers(sample_rate: int = SAMPLE_RATE, n_mels: int = N_MELS) -> np.ndarray:
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2), n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular HTK-style filters, shape (n_mels, n_fft // 2 + 1)."""
    fft_freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def power_spectrogram(waveform: np.ndarray, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """|STFT|^2 with a Hann window and centered reflect padding, shape (frames, bins)."""
    pad = n_fft // 2
    mode = "reflect" if len(waveform) > pad else "constant"
    padded = np.pad(waveform, pad, mode=mode)
    if len(padded) < n_fft:
        padded = np.pad(padded, (0, n_fft - len(padded)))
    n_frames = 1 + (len(padded) - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    window = np.hanning(n_fft + 1)[:-1]
    return np.abs(np.fft.rfft(frames * window, axis=1)) ** 2


def compute_log_mel_spectrogram(
    waveform,
    sample_rate: int = SAMPLE_RATE,
    n_mels: int = N_MELS,
    n_frames: int = N_FRAMES,
    n_fft: int = N_FFT,
    hop: int = HOP,
    eps: float = LOG_EPS,
    resample: bool = False,
) -> np.ndarray:
    """Log-mel power spectrogram of shape ``(n_mels, n_frames)``.

    The time axis is truncated, or padded with silent frames (log eps), to
    ``n_frames``. Input at a rate other than 44 kHz is rejected unless
    ``resample`` is set.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1 or waveform.size == 0:
        raise ValueError("waveform must be a non-empty 1-D sequence")
    if sample_rate != SAMPLE_RATE:
        if not resample:
            raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate} Hz")
        g = np.gcd(int(sample_rate), SAMPLE_RATE)
        waveform = resample_poly(waveform, SAMPLE_RATE // g, int(sample_rate) // g)

    power = power_spectrogram(waveform, n_fft=n_fft, hop=hop)
    mel = power @ mel_filterbank(SAMPLE_RATE, n_fft, n_mels).T
    logmel = np.log(mel + eps).T

    out = np.full((n_mels, n_frames), np.log(eps))
    t = min(n_frames, logmel.shape[1])
    out[:, :t] = logmel[:, :t]
    return out


def standardize(spec: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance over the whole matrix; constant input maps to zeros."""
    spec = np.asarray(spec, dtype=np.float64)
    std = spec.std()
    if std < 1e-12:
        return np.zeros_like(spec)
    return (spec - spec.mean()) / std


def frames_to_samples(n_frames: int, hop: int = HOP) -> int:
    """Waveform length that yields exactly ``n_frames`` centered frames."""
    return (n_frames - 1) * hop
