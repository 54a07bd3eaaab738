"""Utterance manifests and fixed-dimension embedding stores.

Store layout (UTF-8 text, one record per line)::

    VOVE-STORE 1
    model_id<TAB>vove
    dim<TAB>44
    schema<TAB><sha256 of attribute order, or "-">
    count<TAB>N
    <utterance_id><TAB><hex of D little-endian float32 values>
    ...

Manifest layout::

    VOVE-MANIFEST 1
    <utterance_id><TAB><speaker_id><TAB><text_id><TAB><gender F|M|unknown><TAB><audio_path>
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from vove.attributes import NUM_ATTRIBUTES, schema_hash
from vove.errors import ParseError, ValidationError

log = logging.getLogger(__name__)

STORE_MAGIC = "VOVE-STORE"
STORE_VERSION = 1
MANIFEST_MAGIC = "VOVE-MANIFEST"
MANIFEST_VERSION = 1
VOVE_MODEL_ID = "vove"
GENDERS = ("F", "M", "unknown")


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    text_id: str
    gender: str = "unknown"
    audio_path: str = ""

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValidationError(f"utterance {self.utterance_id!r}: gender must be one of {GENDERS}")
        for name in ("utterance_id", "speaker_id", "text_id"):
            value = getattr(self, name)
            if not value or "\t" in value or "\n" in value:
                raise ValidationError(f"{name} must be non-empty and free of tabs/newlines: {value!r}")


def read_manifest(path) -> list[UtteranceRecord]:
    records = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\r\n")
        _check_magic(header, MANIFEST_MAGIC, MANIFEST_VERSION, path)
        for lineno, line in enumerate(f, 2):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 5:
                raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}", path, lineno)
            try:
                rec = UtteranceRecord(*fields)
            except ValidationError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if rec.utterance_id in seen:
                raise ParseError(f"duplicate utterance id {rec.utterance_id!r}", path, lineno)
            seen.add(rec.utterance_id)
            records.append(rec)
    return records


def write_manifest(records: Iterable[UtteranceRecord], path) -> None:
    records = list(records)
    ids = [r.utterance_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate utterance ids in manifest")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MANIFEST_MAGIC} {MANIFEST_VERSION}\n")
        for r in records:
            f.write("\t".join([r.utterance_id, r.speaker_id, r.text_id, r.gender, r.audio_path]) + "\n")


def _check_magic(header: str, magic: str, version: int, path):
    parts = header.split(" ")
    if len(parts) != 2 or parts[0] != magic:
        raise ParseError(f"missing {magic} header", path, 1)
    if parts[1] != str(version):
        raise ParseError(f"unsupported {magic} version {parts[1]!r}", path, 1)


@dataclass
class EmbeddingStore:
    """In-memory store: ``ids[i]`` owns row ``vectors[i]``."""

    model_id: str
    dim: int
    ids: list[str] = field(default_factory=list)
    vectors: np.ndarray | None = None
    schema: str | None = None

    def __post_init__(self):
        if self.vectors is None:
            self.vectors = np.zeros((0, self.dim), dtype=np.float32)
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.schema is None and self.model_id == VOVE_MODEL_ID:
            self.schema = schema_hash()
        self.validate()

    def validate(self):
        if not self.model_id or any(c in self.model_id for c in "\t\n"):
            raise ValidationError(f"bad model id {self.model_id!r}")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValidationError(f"vectors of shape {self.vectors.shape} do not match header dim {self.dim}")
        if self.vectors.shape[0] != len(self.ids):
            raise ValidationError(f"{len(self.ids)} ids but {self.vectors.shape[0]} vectors")
        if len(set(self.ids)) != len(self.ids):
            dupes = sorted({i for i in self.ids if self.ids.count(i) > 1})
            raise ValidationError(f"duplicate utterance ids: {dupes}")
        for uid in self.ids:
            if not uid or any(c in uid for c in "\t\n"):
                raise ValidationError(f"bad utterance id {uid!r}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("non-finite embedding values")
        if self.model_id == VOVE_MODEL_ID:
            if self.dim != NUM_ATTRIBUTES:
                raise ValidationError(f"vove store must have dim {NUM_ATTRIBUTES}, got {self.dim}")
            if np.any((self.vectors < 0) | (self.vectors > 1)):
                raise ValidationError("vove vectors must lie in [0, 1]")
            if self.schema != schema_hash():
                raise ValidationError("vove store schema hash does not match the attribute order")

    @classmethod
    def from_records(cls, model_id: str, records: Sequence[tuple[str, Sequence[float]]], dim: int | None = None):
        if dim is None:
            if not records:
                raise ValidationError("dim required for an empty store")
            dim = len(records[0][1])
        for uid, vec in records:
            if len(vec) != dim:
                raise ValidationError(f"record {uid!r} has dim {len(vec)}, header dim {dim}")
        vectors = np.array([v for _, v in records], dtype=np.float32).reshape(len(records), dim)
        return cls(model_id, dim, [uid for uid, _ in records], vectors)

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, utterance_id: str) -> np.ndarray:
        return self.vectors[self.index[utterance_id]]

    @property
    def index(self) -> dict[str, int]:
        return {uid: i for i, uid in enumerate(self.ids)}

    def require_vove(self):
        if self.model_id != VOVE_MODEL_ID or self.dim != NUM_ATTRIBUTES:
            raise ValidationError(
                f"operation needs a Vo-Ve store (model_id={VOVE_MODEL_ID}, dim={NUM_ATTRIBUTES}); "
                f"got model_id={self.model_id}, dim={self.dim}"
            )

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.dim == other.dim
            and self.schema == other.schema
            and self.ids == other.ids
            and self.vectors.tobytes() == other.vectors.tobytes()
        )


def write_store(store: EmbeddingStore, path) -> None:
    store.validate()
    le = store.vectors.astype("<f4")
    lines = [
        f"{STORE_MAGIC} {STORE_VERSION}",
        f"model_id\t{store.model_id}",
        f"dim\t{store.dim}",
        f"schema\t{store.schema or '-'}",
        f"count\t{len(store)}",
    ]
    lines += [f"{uid}\t{row.tobytes().hex()}" for uid, row in zip(store.ids, le)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_store(path) -> EmbeddingStore:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", path, 1)
    _check_magic(lines[0], STORE_MAGIC, STORE_VERSION, path)
    header = {}
    for lineno, key in zip(range(2, 6), ("model_id", "dim", "schema", "count")):
        if lineno > len(lines):
            raise ParseError(f"truncated header, missing {key!r}", path, lineno)
        parts = lines[lineno - 1].split("\t")
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"expected header field {key!r}", path, lineno)
        header[key] = parts[1]
    try:
        dim, count = int(header["dim"]), int(header["count"])
    except ValueError:
        raise ParseError("dim and count must be integers", path, 3) from None
    body = lines[5:]
    if len(body) != count:
        raise ParseError(f"header declares {count} records, found {len(body)}", path, 5 + min(len(body), count) + 1)
    ids = []
    vectors = np.zeros((count, dim), dtype=np.float32)
    for i, line in enumerate(body):
        lineno = 6 + i
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected utterance id and hex vector", path, lineno)
        try:
            raw = bytes.fromhex(parts[1])
        except ValueError:
            raise ParseError("vector is not valid hex", path, lineno) from None
        if len(raw) != 4 * dim:
            raise ParseError(f"vector has {len(raw) // 4} values, header dim {dim}", path, lineno)
        vectors[i] = np.frombuffer(raw, dtype="<f4")
        ids.append(parts[0])
    schema = None if header["schema"] == "-" else header["schema"]
    try:
        return EmbeddingStore(header["model_id"], dim, ids, vectors, schema=schema)
    except ValidationError as exc:
        raise ParseError(str(exc), path) from None


@dataclass
class JoinedStore:
    """Store rows aligned with their manifest metadata."""

    store: EmbeddingStore
    records: list[UtteranceRecord]

    @property
    def vectors(self) -> np.ndarray:
        return self.store.vectors

    @property
    def ids(self) -> list[str]:
        return self.store.ids

    @property
    def speakers(self) -> list[str]:
        return [r.speaker_id for r in self.records]

    def by_speaker(self) -> dict[str, list[int]]:
        """Row indices per speaker; speakers and rows in sorted-id order."""
        groups: dict[str, list[int]] = {}
        for i in sorted(range(len(self.records)), key=lambda i: self.ids[i]):
            groups.setdefault(self.records[i].speaker_id, []).append(i)
        return dict(sorted(groups.items()))


def join_manifest(store: EmbeddingStore, manifest: Sequence[UtteranceRecord]) -> JoinedStore:
    by_id = {r.utterance_id: r for r in manifest}
    missing = [uid for uid in store.ids if uid not in by_id]
    if missing:
        raise ValidationError(f"utterance ids missing from manifest: {missing}")
    return JoinedStore(store, [by_id[uid] for uid in store.ids])
