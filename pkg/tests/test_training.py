import numpy as np
import pytest
import torch

from vove.attributes import annotation_to_soft_label
from vove.errors import ValidationError
from vove.frontend import FrontendConfig, Waveform, log_mel
from vove.model import ModelConfig
from vove.store import UtteranceRecord, read_store, write_store
from vove.synthetic import random_annotation, tone, write_wav
from vove.training import embed_features, extract, features_for, init_state, load_checkpoint, save_checkpoint, split_validation, train

FE = FrontendConfig(n_mels=40)


def toy(n_speakers=4, per_speaker=2, seconds=0.5):
    rng = np.random.default_rng(0)
    man, feats, labels = [], [], {}
    for k in range(n_speakers):
        spk = f"spk{k}"
        labels[spk] = annotation_to_soft_label(random_annotation(spk, rng))
        for u in range(per_speaker):
            man.append(UtteranceRecord(f"{spk}_u{u}", spk, f"t{u}", "F", f"{spk}_u{u}.wav"))
            feats.append(log_mel(Waveform(tone(120 * 1.3**k, seconds, phase=u), 16000), FE))
    return man, feats, labels


def small_cfg(**kw):
    base = dict(backbone_channels=16, res2_scale=4, batch=4, epochs=3, crop_seconds=0.3,
                val_fraction=0.0, learning_rate=1e-3)
    base.update(kw)
    return ModelConfig(**base)


def test_zero_epochs_returns_initialization():
    man, feats, labels = toy()
    state, tlog = train(man, labels, small_cfg(epochs=0), FE, features=feats)
    ref = init_state(FE, state.model_config, state.speakers)
    for k, v in ref.net.state_dict().items():
        assert torch.equal(v, state.net.state_dict()[k])
    assert tlog.epochs == []


def test_validation_errors():
    man, feats, labels = toy()
    with pytest.raises(ValidationError):
        train([], labels, small_cfg(), FE, features=[])
    labels.pop("spk1")
    with pytest.raises(ValidationError, match="spk1"):
        train(man, labels, small_cfg(), FE, features=feats)


def test_split_is_stratified_and_seeded():
    man = [UtteranceRecord(f"u{i}", f"s{i % 3}", "t") for i in range(30)]
    tr, va = split_validation(man, 0.1, seed=4)
    assert sorted(tr + va) == list(range(30)) and len(va) == 3
    assert {man[i].speaker_id for i in va} == {"s0", "s1", "s2"}
    assert split_validation(man, 0.1, seed=4) == (tr, va)
    single = [UtteranceRecord(f"u{i}", f"s{i}", "t") for i in range(4)]
    assert split_validation(single, 0.5, seed=0)[1] == []


def test_same_seed_same_curve():
    man, feats, labels = toy()
    a_state, a = train(man, labels, small_cfg(), FE, features=feats)
    b_state, b = train(man, labels, small_cfg(), FE, features=feats)
    assert a.step_losses == b.step_losses
    for k, v in a_state.net.state_dict().items():
        assert torch.equal(v, b_state.net.state_dict()[k])


def test_validation_selection_and_log():
    man, feats, labels = toy(per_speaker=4)
    state, tlog = train(man, labels, small_cfg(val_fraction=0.25, epochs=4), FE, features=feats)
    assert tlog.selection == "val"
    assert all(e.val_loss is not None for e in tlog.epochs)
    best = min(tlog.epochs, key=lambda e: e.val_loss)
    assert tlog.selected_epoch == best.epoch
    lines = tlog.to_jsonl().splitlines()
    assert len(lines) == 4 and '"train_loss"' in lines[0]


def test_patience_stops_early():
    man, feats, labels = toy()
    _, tlog = train(man, labels, small_cfg(epochs=50, learning_rate=10.0, patience=2), FE, features=feats)
    assert len(tlog.epochs) < 50


def test_extract_and_checkpoint_round_trip(tmp_path):
    man, _, labels = toy(per_speaker=1)
    for rec in man:
        write_wav(tmp_path / rec.audio_path, tone(120 * 1.3 ** int(rec.speaker_id[3:]), 0.5))
    feats = features_for(man, FE, tmp_path)
    state, _ = train(man, labels, small_cfg(), FE, features=feats)
    final_eval = embed_features(state, feats)
    save_checkpoint(state, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    assert loaded.speakers == state.speakers and loaded.model_config == state.model_config

    doubled = man + [UtteranceRecord("dup", man[0].speaker_id, "t0", "F", man[0].audio_path)]
    store, errors = extract(doubled, loaded, audio_root=tmp_path)
    assert errors == [] and len(store) == len(doubled)
    assert np.array_equal(store["dup"], store[man[0].utterance_id])
    assert np.all((store.vectors > 0) & (store.vectors < 1))
    np.testing.assert_allclose(store.vectors[: len(man)], final_eval, atol=1e-6, rtol=0)
    again, _ = extract(doubled, load_checkpoint(tmp_path / "m.ckpt"), audio_root=tmp_path)
    assert again.vectors.tobytes() == store.vectors.tobytes()
    write_store(store, tmp_path / "s.vstore")
    assert read_store(tmp_path / "s.vstore") == store


def test_extract_reports_failures(tmp_path):
    man, feats, labels = toy(per_speaker=1)
    state, _ = train(man, labels, small_cfg(epochs=0), FE, features=feats)
    write_wav(tmp_path / man[0].audio_path, tone(200, 0.5))
    store, errors = extract(man, state, audio_root=tmp_path)
    assert len(store) == 1 and len(errors) == len(man) - 1
    assert {e.utterance_id for e in errors} == {r.utterance_id for r in man[1:]}
