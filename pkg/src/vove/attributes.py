"""Attribute schema and soft ground-truth labels from annotator intensities."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from vove.errors import ParseError, ValidationError

ATTRIBUTES: tuple[str, ...] = (
    "adult-like", "bright", "calm", "clear", "cool", "cute", "dark", "elegant",
    "feminine", "fluent", "friendly", "gender-neutral", "halting", "hard",
    "intellectual", "intense", "kind", "light", "lively", "masculine", "mature",
    "middle-aged", "modest", "muffled", "nasal", "old", "powerful", "raspy",
    "reassuring", "refreshing", "relaxed", "sexy", "sharp", "sincere", "soft",
    "strict", "sweet", "tensed", "thick", "thin", "unique", "weak", "wild", "young",
)
NUM_ATTRIBUTES = len(ATTRIBUTES)
NUM_ANNOTATORS = 3
ATTRIBUTE_INDEX: dict[str, int] = {name: i for i, name in enumerate(ATTRIBUTES)}
GENDER_ATTRIBUTES: tuple[str, ...] = ("feminine", "gender-neutral", "masculine")


def schema_hash(names: Sequence[str] = ATTRIBUTES) -> str:
    """SHA-256 of the newline-joined attribute order; pins vector indexing in files."""
    return hashlib.sha256("\n".join(names).encode("utf-8")).hexdigest()


class Intensity(enum.IntEnum):
    # ordering matters: comparisons follow annotator strength
    NONE = 0
    SLIGHTLY = 1
    NORMAL = 2
    VERY = 3

    @classmethod
    def parse(cls, token: str) -> "Intensity":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown intensity level {token!r}") from None

    @property
    def token(self) -> str:
        return self.name.lower()


INTENSITY_WEIGHTS: dict[Intensity, float] = {
    Intensity.VERY: 1.5,
    Intensity.NORMAL: 1.25,
    Intensity.SLIGHTLY: 0.5,
    Intensity.NONE: 0.0,
}


def intensity_weight(level: Intensity) -> float:
    return INTENSITY_WEIGHTS[Intensity(level)]


@dataclass(frozen=True)
class SpeakerAnnotation:
    """Three annotators' intensity labels for every attribute of one speaker.

    ``labels[i]`` holds the triple for attribute ``ATTRIBUTES[i]``.
    """

    speaker_id: str
    labels: tuple[tuple[Intensity, ...], ...]

    def __post_init__(self):
        if len(self.labels) != NUM_ATTRIBUTES:
            raise ValidationError(
                f"speaker {self.speaker_id!r}: expected {NUM_ATTRIBUTES} attributes, got {len(self.labels)}"
            )
        for i, triple in enumerate(self.labels):
            if len(triple) != NUM_ANNOTATORS:
                raise ValidationError(
                    f"speaker {self.speaker_id!r}, attribute {ATTRIBUTES[i]!r}: "
                    f"expected {NUM_ANNOTATORS} annotator labels, got {len(triple)}"
                )


def soft_degree(triple: Iterable[Intensity]) -> float:
    """Mean annotator weight for one attribute, clipped to [0, 1]."""
    levels = list(triple)
    if len(levels) != NUM_ANNOTATORS:
        raise ValidationError(f"expected {NUM_ANNOTATORS} annotator labels, got {len(levels)}")
    s = sum(intensity_weight(level) for level in levels)
    return min(max(s / NUM_ANNOTATORS, 0.0), 1.0)


def annotation_to_soft_label(ann: SpeakerAnnotation) -> np.ndarray:
    return np.array([soft_degree(triple) for triple in ann.labels], dtype=np.float64)


# --- annotation / label files -------------------------------------------------


def parse_annotation_line(line: str, path=None, lineno: int | None = None) -> SpeakerAnnotation:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != NUM_ATTRIBUTES + 1:
        raise ParseError(
            f"expected speaker id + {NUM_ATTRIBUTES} attribute fields, got {len(fields)} fields", path, lineno
        )
    speaker_id = fields[0]
    if not speaker_id:
        raise ParseError("empty speaker id", path, lineno)
    labels = []
    for name, field in zip(ATTRIBUTES, fields[1:]):
        tokens = field.split(",")
        if len(tokens) != NUM_ANNOTATORS:
            raise ParseError(f"attribute {name!r}: expected 3 comma-separated levels, got {field!r}", path, lineno)
        try:
            labels.append(tuple(Intensity.parse(t) for t in tokens))
        except ValidationError as exc:
            raise ParseError(f"attribute {name!r}: {exc}", path, lineno) from None
    return SpeakerAnnotation(speaker_id, tuple(labels))


def format_annotation(ann: SpeakerAnnotation) -> str:
    triples = (",".join(level.token for level in triple) for triple in ann.labels)
    return "\t".join([ann.speaker_id, *triples])


def read_annotations(path) -> list[SpeakerAnnotation]:
    out = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            ann = parse_annotation_line(line, path, lineno)
            if ann.speaker_id in seen:
                raise ParseError(f"duplicate speaker id {ann.speaker_id!r}", path, lineno)
            seen.add(ann.speaker_id)
            out.append(ann)
    return out


def format_label(speaker_id: str, values: Sequence[float]) -> str:
    return "\t".join([speaker_id, *(f"{float(x):.6f}" for x in values)])


def write_labels(labels: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for speaker_id, values in labels.items():
            f.write(format_label(speaker_id, values) + "\n")


def read_labels(path) -> dict[str, np.ndarray]:
    labels: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != NUM_ATTRIBUTES + 1:
                raise ParseError(f"expected speaker id + {NUM_ATTRIBUTES} values, got {len(fields)} fields", path, lineno)
            try:
                values = np.array([float(x) for x in fields[1:]])
            except ValueError:
                raise ParseError("non-numeric label value", path, lineno) from None
            if not np.all((values >= 0.0) & (values <= 1.0)):
                raise ParseError("label values must lie in [0, 1]", path, lineno)
            if fields[0] in labels:
                raise ParseError(f"duplicate speaker id {fields[0]!r}", path, lineno)
            labels[fields[0]] = values
    return labels


def build_label_file(annotation_path, out_path) -> int:
    """Convert an annotation file into a label file; returns the speaker count."""
    anns = read_annotations(annotation_path)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_labels({a.speaker_id: annotation_to_soft_label(a) for a in anns}, out_path)
    return len(anns)
