"""Deterministic toy data: tone "speakers", random annotations, WAV writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from vove.attributes import ATTRIBUTES, Intensity, SpeakerAnnotation

# (triple, probability); mostly hard degrees so a model can fit them closely
_TRIPLES = [
    ((Intensity.NONE,) * 3, 0.70),
    ((Intensity.VERY, Intensity.VERY, Intensity.NONE), 0.15),
    ((Intensity.NORMAL, Intensity.NORMAL, Intensity.SLIGHTLY), 0.10),
    ((Intensity.SLIGHTLY, Intensity.NONE, Intensity.NONE), 0.05),
]


def random_annotation(speaker_id: str, rng: np.random.Generator) -> SpeakerAnnotation:
    probs = np.array([p for _, p in _TRIPLES])
    picks = rng.choice(len(_TRIPLES), size=len(ATTRIBUTES), p=probs / probs.sum())
    labels = []
    for k in picks:
        triple = list(_TRIPLES[k][0])
        rng.shuffle(triple)
        labels.append(tuple(triple))
    return SpeakerAnnotation(speaker_id, tuple(labels))


def tone(freq: float, seconds: float, sample_rate: int = 16000, amplitude: float = 0.5,
         phase: float = 0.0, harmonics: int = 3) -> np.ndarray:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    x = sum(np.sin(2 * np.pi * freq * h * t + phase * h) / h for h in range(1, harmonics + 1))
    return amplitude * x / np.max(np.abs(x))


def write_wav(path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(samples * 32767), -32768, 32767).astype(np.int16)
    wavfile.write(path, sample_rate, pcm)
