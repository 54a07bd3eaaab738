"""Run configuration: one JSON file, validated before any command does work."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from vove.errors import ValidationError
from vove.frontend import FrontendConfig
from vove.model import ModelConfig
from vove.pairs import DISSIMILAR_THRESHOLD, SIMILAR_THRESHOLD

PATH_KEYS = (
    "annotations", "labels", "manifest", "audio_root", "checkpoint", "store", "pred_store", "gt_store",
    "synth_store", "pairs", "wer", "responses", "answer_key", "train_log",
)


@dataclass(frozen=True)
class MetricConfig:
    thresholds: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    n_per_speaker: int = 100
    repeats: int | None = 100
    ks: tuple[int, ...] = (1, 5, 10)

    def __post_init__(self):
        for t in self.thresholds:
            if not 0.0 < t < 1.0:
                raise ValidationError(f"threshold {t} outside (0, 1)")
        if self.n_per_speaker < 2:
            raise ValidationError("n_per_speaker must be >= 2")
        if self.repeats is not None and self.repeats < 1:
            raise ValidationError("repeats must be >= 1 or null for exhaustive evaluation")
        if not self.ks or min(self.ks) < 1:
            raise ValidationError("ks must be positive")


@dataclass(frozen=True)
class PairConfig:
    set_kind: str = "dissimilar"
    n_pairs: int = 100
    dissimilar_threshold: float = DISSIMILAR_THRESHOLD
    similar_threshold: float = SIMILAR_THRESHOLD
    gender_control: bool = True
    exclude_gender_attrs: bool = False
    selection_policy: str | None = None

    def __post_init__(self):
        if self.set_kind not in ("dissimilar", "similar"):
            raise ValidationError(f"set_kind must be 'dissimilar' or 'similar', got {self.set_kind!r}")
        if self.n_pairs < 1:
            raise ValidationError("n_pairs must be >= 1")
        if self.selection_policy not in (None, "wer", "first"):
            raise ValidationError("selection_policy must be null, 'wer' or 'first'")


@dataclass(frozen=True)
class AbxConfig:
    fake_audio_a: str | None = None
    fake_audio_b: str | None = None
    fake_label: str = "human voice"
    fake_answer: str = "A"


@dataclass(frozen=True)
class ExplainConfig:
    top_n: int = 10
    floor: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    pairs: PairConfig = field(default_factory=PairConfig)
    abx: AbxConfig = field(default_factory=AbxConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    paths: dict[str, str] = field(default_factory=dict)


_SECTIONS = {
    "frontend": FrontendConfig,
    "model": ModelConfig,
    "metrics": MetricConfig,
    "pairs": PairConfig,
    "abx": AbxConfig,
    "explain": ExplainConfig,
}
# seeds come only from the top level
_HIDDEN = {"model": {"seed", "embedding_dim"}}


def _build(section: str, cls, data) -> object:
    if not isinstance(data, dict):
        raise ValidationError(f"config section {section!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)} - _HIDDEN.get(section, set())
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"unknown config key(s) in {section!r}: {unknown}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"config section {section!r}: {exc}") from None


def parse_config(data: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(data) - {"seed", "paths", *_SECTIONS})
    if unknown:
        raise ValidationError(f"unknown config key(s): {unknown}")
    seed = data.get("seed", 0) if seed_override is None else seed_override
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    sections = {name: _build(name, cls, data.get(name, {})) for name, cls in _SECTIONS.items()}
    sections["model"] = dataclasses.replace(sections["model"], seed=seed)
    paths = data.get("paths", {})
    if not isinstance(paths, dict):
        raise ValidationError("paths must be an object")
    bad = sorted(set(paths) - set(PATH_KEYS))
    if bad:
        raise ValidationError(f"unknown config key(s) in 'paths': {bad}")
    return RunConfig(seed=seed, paths=dict(paths), **sections)


def load_config(path=None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, seed_override)
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data, seed_override)
