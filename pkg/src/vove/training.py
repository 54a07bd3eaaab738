"""Training, checkpointing and embedding extraction."""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from vove.attributes import NUM_ATTRIBUTES, schema_hash
from vove.errors import ValidationError
from vove.frontend import FrontendConfig, load_audio, log_mel
from vove.model import ModelConfig, VoVeNet, total_loss
from vove.store import VOVE_MODEL_ID, EmbeddingStore, UtteranceRecord

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "vove-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    selected_epoch: int = 0
    selection: str = "train"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e)) + "\n" for e in self.epochs)


@dataclass
class ModelState:
    net: VoVeNet
    model_config: ModelConfig
    frontend_config: FrontendConfig
    speakers: list[str]
    optimizer_state: dict | None = None
    epoch: int = 0

    @property
    def speaker_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.speakers)}


def speaker_index_map(manifest: Sequence[UtteranceRecord]) -> list[str]:
    return sorted({r.speaker_id for r in manifest})


def init_state(frontend: FrontendConfig, cfg: ModelConfig, speakers: Sequence[str]) -> ModelState:
    if len(speakers) != cfg.n_speakers:
        raise ValidationError(f"config n_speakers={cfg.n_speakers} but {len(speakers)} speakers in data")
    torch.manual_seed(cfg.seed)
    return ModelState(VoVeNet(frontend.n_mels, cfg), cfg, frontend, list(speakers))


def features_for(records: Sequence[UtteranceRecord], frontend: FrontendConfig, audio_root=None) -> list[np.ndarray]:
    root = Path(audio_root) if audio_root is not None else None
    out = []
    for r in records:
        path = Path(r.audio_path)
        if root is not None and not path.is_absolute():
            path = root / path
        out.append(log_mel(load_audio(path, frontend.sample_rate), frontend))
    return out


def split_validation(manifest: Sequence[UtteranceRecord], fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Per-speaker random split; every speaker keeps at least one training utterance."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    by_spk: dict[str, list[int]] = {}
    for i, r in enumerate(manifest):
        by_spk.setdefault(r.speaker_id, []).append(i)
    train, val = [], []
    for spk in sorted(by_spk):
        idx = np.array(by_spk[spk])
        n_val = min(int(np.floor(len(idx) * fraction)), len(idx) - 1)
        perm = rng.permutation(idx)
        val += perm[:n_val].tolist()
        train += perm[n_val:].tolist()
    return sorted(train), sorted(val)


def _crop(feat: np.ndarray, n_frames: int, pad_value: float, rng: np.random.Generator) -> np.ndarray:
    t = feat.shape[0]
    if t >= n_frames:
        start = int(rng.integers(t - n_frames + 1))
        return feat[start:start + n_frames]
    # padding with the floor value equals the features of appended silence
    pad = np.full((n_frames - t, feat.shape[1]), pad_value)
    return np.concatenate([feat, pad], axis=0)


def _eval_loss(state: ModelState, feats, targets, spk_idx) -> float:
    net = state.net
    net.eval()
    with torch.no_grad():
        total = 0.0
        for f, y, s in zip(feats, targets, spk_idx):
            x = torch.as_tensor(f, dtype=torch.float32)[None]
            a, b = net(x)
            total += float(total_loss(a, b, torch.as_tensor(y[None], dtype=torch.float32), torch.tensor([s])))
    return total / len(feats)


def train(
    manifest: Sequence[UtteranceRecord],
    labels: Mapping[str, np.ndarray],
    cfg: ModelConfig,
    frontend: FrontendConfig = FrontendConfig(),
    features: Sequence[np.ndarray] | None = None,
    audio_root=None,
) -> tuple[ModelState, TrainLog]:
    """Train on random fixed-length crops with the combined BCE + speaker CE loss.

    With a validation split the returned parameters are those of the epoch
    with the lowest validation loss; otherwise the lowest training loss.
    ``features`` may be given to skip audio loading (aligned with ``manifest``).
    """
    if not manifest:
        raise ValidationError("empty training manifest")
    missing = sorted({r.speaker_id for r in manifest if r.speaker_id not in labels})
    if missing:
        raise ValidationError(f"no soft label for speakers: {missing}")
    speakers = speaker_index_map(manifest)
    cfg = dataclasses.replace(cfg, n_speakers=len(speakers))
    state = init_state(frontend, cfg, speakers)
    if features is None:
        features = features_for(manifest, frontend, audio_root)
    if len(features) != len(manifest):
        raise ValidationError("features are not aligned with the manifest")

    torch.use_deterministic_algorithms(True)
    spk_of = state.speaker_index
    targets = [np.asarray(labels[r.speaker_id], dtype=np.float32) for r in manifest]
    spk_idx = [spk_of[r.speaker_id] for r in manifest]
    train_idx, val_idx = split_validation(manifest, cfg.val_fraction, cfg.seed)
    crop_frames = frontend.num_frames(int(round(cfg.crop_seconds * frontend.sample_rate)))
    pad_value = float(np.log(frontend.log_floor))

    net = state.net
    opt = torch.optim.AdamW(net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    tlog = TrainLog(selection="val" if val_idx else "train")
    best = (float("inf"), copy.deepcopy(net.state_dict()), 0)
    since_best = 0

    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 2, epoch])))
        order = rng.permutation(train_idx)
        batches = [order[i:i + cfg.batch] for i in range(0, len(order), cfg.batch)]
        # batch norm needs two samples per batch in training mode
        batches = [b for b in batches if len(b) > 1]
        if not batches:
            raise ValidationError("need at least two training utterances per batch")
        net.train()
        losses = []
        for b in batches:
            x = torch.as_tensor(np.stack([_crop(features[i], crop_frames, pad_value, rng) for i in b]),
                                dtype=torch.float32)
            y = torch.as_tensor(np.stack([targets[i] for i in b]))
            s = torch.tensor([spk_idx[i] for i in b])
            attr, spk = net(x)
            loss = total_loss(attr, spk, y, s)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        tlog.step_losses += losses
        train_loss = float(np.mean(losses))
        val_loss = None
        if val_idx:
            val_loss = _eval_loss(state, [features[i] for i in val_idx], [targets[i] for i in val_idx],
                                  [spk_idx[i] for i in val_idx])
        tlog.epochs.append(EpochRecord(epoch, train_loss, val_loss))
        log.info("epoch %d train_loss=%.5f val_loss=%s", epoch, train_loss, val_loss)

        score = val_loss if val_loss is not None else train_loss
        if score < best[0]:
            best = (score, copy.deepcopy(net.state_dict()), epoch)
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                log.info("early stop at epoch %d", epoch)
                break

    if cfg.epochs > 0:
        net.load_state_dict(best[1])
        tlog.selected_epoch = best[2]
    state.optimizer_state = opt.state_dict()
    state.epoch = len(tlog.epochs)
    net.eval()
    return state, tlog


def embed_features(state: ModelState, feats: Sequence[np.ndarray]) -> np.ndarray:
    """Full-length inference, one utterance at a time."""
    net = state.net
    net.eval()
    out = np.zeros((len(feats), NUM_ATTRIBUTES), dtype=np.float64)
    with torch.no_grad():
        for i, f in enumerate(feats):
            x = torch.as_tensor(f, dtype=next(net.parameters()).dtype)[None]
            out[i] = net.embed(x)[0].double().numpy()
    return out


@dataclass
class ExtractionError:
    utterance_id: str
    audio_path: str
    message: str


def extract(manifest: Sequence[UtteranceRecord], state: ModelState, audio_root=None) -> tuple[EmbeddingStore, list[ExtractionError]]:
    """Vo-Ve vector for every readable utterance; failures are collected, not raised."""
    ids, vecs, errors = [], [], []
    for rec in manifest:
        try:
            feat = features_for([rec], state.frontend_config, audio_root)[0]
        except (OSError, ValueError) as exc:
            errors.append(ExtractionError(rec.utterance_id, rec.audio_path, str(exc)))
            continue
        ids.append(rec.utterance_id)
        vecs.append(embed_features(state, [feat])[0])
    vectors = np.array(vecs, dtype=np.float32).reshape(len(ids), NUM_ATTRIBUTES)
    return EmbeddingStore(VOVE_MODEL_ID, NUM_ATTRIBUTES, ids, vectors), errors


def save_checkpoint(state: ModelState, path) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model_config": asdict(state.model_config),
            "frontend_config": asdict(state.frontend_config),
            "speakers": list(state.speakers),
            "schema": schema_hash(),
            "state_dict": state.net.state_dict(),
            "optimizer_state": state.optimizer_state,
            "epoch": state.epoch,
        },
        path,
    )


def load_checkpoint(path) -> ModelState:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path}: not a Vo-Ve checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {blob.get('version')}")
    if blob["schema"] != schema_hash():
        raise ValidationError(f"{path}: attribute schema hash mismatch")
    cfg = ModelConfig(**blob["model_config"])
    frontend = FrontendConfig(**blob["frontend_config"])
    net = VoVeNet(frontend.n_mels, cfg)
    net.load_state_dict(blob["state_dict"])
    net.eval()
    return ModelState(net, cfg, frontend, blob["speakers"], blob["optimizer_state"], blob["epoch"])
