"""Audio loading and log-Mel features."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from vove.errors import AudioFormatError, ShapeError, ValidationError


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 80
    fft_size: int = 512
    log_floor: float = 1e-10
    mean_norm: bool = False

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if self.window_ms < self.hop_ms or self.hop_ms <= 0:
            raise ValidationError("need window_ms >= hop_ms > 0")
        if self.n_mels < 1:
            raise ValidationError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be > 0")
        if self.fft_size < self.window_samples:
            raise ValidationError(f"fft_size {self.fft_size} shorter than window ({self.window_samples} samples)")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.window_samples:
            return 0
        return 1 + (num_samples - self.window_samples) // self.hop_samples


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __len__(self):
        return len(self.samples)


def load_audio(path, target_rate: int = 16000) -> Waveform:
    """Read a PCM WAV file as mono float64 in [-1, 1] at ``target_rate``.

    Stereo is downmixed by channel mean; other rates are resampled with a
    polyphase windowed-sinc filter.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, wave.Error) as exc:
        raise AudioFormatError(f"{path}: unsupported or corrupt audio ({exc})") from None
    if data.size == 0:
        raise AudioFormatError(f"{path}: zero-length audio")

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        samples = data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    if rate != target_rate:
        ratio = Fraction(target_rate, rate)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
    return Waveform(samples, target_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2))
    return edges[1:-1]


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Triangular HTK-style filters with unit peak, shape (n_mels, fft_size // 2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Log-Mel spectrogram, shape (frames, n_mels).

    Frames are taken without padding: ``1 + (N - window) // hop`` of them.
    """
    if w.sample_rate != cfg.sample_rate:
        raise ValidationError(f"waveform rate {w.sample_rate} != configured {cfg.sample_rate}")
    x = np.asarray(w.samples, dtype=np.float64)
    win, hop = cfg.window_samples, cfg.hop_samples
    if len(x) < win:
        raise ShapeError(f"waveform of {len(x)} samples is shorter than one window ({win})")
    n_frames = cfg.num_frames(len(x))
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    spec = np.fft.rfft(frames * get_window("hann", win), n=cfg.fft_size, axis=1)
    power = spec.real**2 + spec.imag**2
    mel = power @ mel_filterbank(cfg).T
    out = np.log(np.maximum(mel, cfg.log_floor))
    if cfg.mean_norm:
        out = out - out.mean(axis=0, keepdims=True)
    return out
