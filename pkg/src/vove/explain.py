"""Readable attribute profiles and pairwise attribute differences.

Text output is one ``attribute: value`` line per entry; the structured form
is JSON with the same numbers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from vove.attributes import ATTRIBUTES, NUM_ATTRIBUTES
from vove.errors import ValidationError
from vove.metrics import cosine


def _as_vove(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (NUM_ATTRIBUTES,):
        raise ValidationError(f"expected a {NUM_ATTRIBUTES}-dim Vo-Ve vector, got shape {v.shape}")
    if np.any((v < 0) | (v > 1)):
        raise ValidationError("Vo-Ve values must lie in [0, 1]")
    return v


def profile(v, top_n: int = 10, floor: float = 0.0) -> list[tuple[str, float]]:
    """Attributes by descending value (ties in canonical order), at most ``top_n``, none below ``floor``."""
    v = _as_vove(v)
    order = sorted(range(NUM_ATTRIBUTES), key=lambda i: (-v[i], i))
    return [(ATTRIBUTES[i], float(v[i])) for i in order if v[i] >= floor][: max(top_n, 0)]


@dataclass(frozen=True)
class AttributeDiff:
    attribute: str
    v_a: float
    v_b: float
    delta: float


@dataclass
class DiffReport:
    diffs: list[AttributeDiff]
    cosine: float | None
    note: str = ""

    def to_text(self) -> str:
        lines = [f"cosine: {self.cosine:.6f}" if self.cosine is not None else f"cosine: n/a ({self.note})"]
        lines += [f"{d.attribute}: {d.delta:+.4f} ({d.v_a:.4f} vs {d.v_b:.4f})" for d in self.diffs]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def diff_report(v_a, v_b) -> DiffReport:
    """All 44 attribute differences ``v_a - v_b``, largest magnitude first."""
    a, b = _as_vove(v_a), _as_vove(v_b)
    delta = a - b
    order = sorted(range(NUM_ATTRIBUTES), key=lambda i: (-abs(delta[i]), i))
    diffs = [AttributeDiff(ATTRIBUTES[i], float(a[i]), float(b[i]), float(delta[i])) for i in order]
    try:
        return DiffReport(diffs, cosine(a, b))
    except ValidationError:
        return DiffReport(diffs, None, "zero vector")


def profile_text(utterance_id: str, entries) -> str:
    return "\n".join([f"[{utterance_id}]", *(f"{name}: {value:.4f}" for name, value in entries)]) + "\n"
