import numpy as np
import pytest

from vove.attributes import ATTRIBUTE_INDEX, ATTRIBUTES
from vove.errors import ValidationError
from vove.pairs import (
    FakePair,
    build_inter_pairs,
    build_intra_pairs,
    export_abx,
    read_answer_key,
    read_pairs,
    score_abx,
    select_synth_candidates,
    write_pairs,
)
from vove.store import EmbeddingStore, UtteranceRecord


def store_of(vectors: dict):
    ids = sorted(vectors)
    return EmbeddingStore("vove", 44, ids, np.array([vectors[i] for i in ids]))


def base(value=0.5):
    return np.full(44, value)


def test_single_qualifying_dimension():
    a, b = base(), base()
    a[2] = 0.75  # float32-exact values
    b[2] = 0.25
    s = store_of({"u1": a, "u2": b})
    man = [UtteranceRecord("u1", "p1", "t1", "F"), UtteranceRecord("u2", "p2", "t1", "F")]
    pairs = build_inter_pairs(s, man, "dissimilar")
    assert len(pairs) == 1
    p = pairs[0]
    assert (p.utterance_a, p.utterance_b, p.attribute_index, p.delta) == ("u1", "u2", 2, 0.5)
    assert p.attribute == "calm" and p.pair_kind == "inter"


def test_identical_vectors_only_similar():
    s = store_of({"u1": base(), "u2": base()})
    man = [UtteranceRecord("u1", "p1", "t1", "M"), UtteranceRecord("u2", "p2", "t1", "M")]
    assert build_inter_pairs(s, man, "dissimilar") == []
    sim = build_inter_pairs(s, man, "similar", seed=3)
    assert len(sim) == 1 and sim[0].delta == 0.0


def test_boundary_point_three_excluded_everywhere():
    a, b = np.zeros(44), np.zeros(44)
    a[:] = 0.3  # float32(0.3) is not exactly 0.3
    s = EmbeddingStore("vove", 44, ["u1", "u2"], np.array([a, b]))
    delta = float(s.vectors[0, 0]) - float(s.vectors[1, 0])
    man = [UtteranceRecord("u1", "p1", "t1", "F"), UtteranceRecord("u2", "p2", "t1", "F")]
    got = build_inter_pairs(s, man, "dissimilar")
    assert bool(got) == (abs(delta) > 0.3)
    assert build_inter_pairs(s, man, "similar") == []


def test_exact_threshold_boundary_in_float64():
    from vove.pairs import qualifying_mask

    d = np.array([0.3, -0.3, 0.1, 0.0999, 0.30001])
    assert qualifying_mask(d, "dissimilar").tolist() == [False, False, False, False, True]
    assert qualifying_mask(d, "similar").tolist() == [False, False, False, True, False]


def test_constraints_respected():
    rng = np.random.default_rng(0)
    vecs, man = {}, []
    for spk in range(6):
        gender = "F" if spk % 2 else "M"
        for t in range(3):
            uid = f"s{spk}_t{t}"
            vecs[uid] = rng.uniform(size=44)
            man.append(UtteranceRecord(uid, f"s{spk}", f"t{t}", gender))
    s = store_of(vecs)
    meta = {r.utterance_id: r for r in man}
    pairs = build_inter_pairs(s, man, "dissimilar", n_pairs=1000, seed=1)
    assert pairs
    keys = set()
    for p in pairs:
        a, b = meta[p.utterance_a], meta[p.utterance_b]
        assert a.speaker_id != b.speaker_id and a.text_id == b.text_id and a.gender == b.gender
        assert abs(vecs[p.utterance_a][p.attribute_index] - vecs[p.utterance_b][p.attribute_index]) > 0.3
        keys.add(frozenset((p.utterance_a, p.utterance_b)))
    assert len(keys) == len(pairs)
    # without gender control cross-gender pairs appear
    free = build_inter_pairs(s, man, "dissimilar", n_pairs=1000, seed=1, gender_control=False)
    assert any(meta[p.utterance_a].gender != meta[p.utterance_b].gender for p in free)


def test_seeded_and_shortfall(caplog):
    rng = np.random.default_rng(4)
    vecs = {f"u{i}": rng.uniform(size=44) for i in range(6)}
    man = [UtteranceRecord(f"u{i}", f"s{i}", "t", "F") for i in range(6)]
    s = store_of(vecs)
    assert build_inter_pairs(s, man, "dissimilar", 5, seed=2) == build_inter_pairs(s, man, "dissimilar", 5, seed=2)
    with caplog.at_level("WARNING"):
        got = build_inter_pairs(s, man, "dissimilar", 100, seed=2)
    assert len(got) == 15 and "only 15" in caplog.text


def test_exclude_gender_attrs():
    a, b = base(), base()
    a[ATTRIBUTE_INDEX["feminine"]] = 1.0
    s = store_of({"u1": a, "u2": b})
    man = [UtteranceRecord("u1", "p1", "t1", "F"), UtteranceRecord("u2", "p2", "t1", "F")]
    assert build_inter_pairs(s, man, "dissimilar")[0].attribute == "feminine"
    assert build_inter_pairs(s, man, "dissimilar", exclude_gender_attrs=True) == []


def test_rejects_non_vove_store():
    s = EmbeddingStore("ecapa", 3, ["u1"], np.ones((1, 3)))
    with pytest.raises(ValidationError):
        build_inter_pairs(s, [UtteranceRecord("u1", "p", "t")], "similar")


def _intra_setup(synth_vectors: dict, gt_vector):
    gt = store_of({"g1": gt_vector})
    synth = store_of(synth_vectors)
    man = [UtteranceRecord("g1", "p1", "t1", "F")] + [UtteranceRecord(u, "p1", "t1", "F") for u in synth_vectors]
    return gt, synth, man


def test_intra_dissimilar_and_similar():
    g, s = base(), base()
    s[7] = 0.9
    gt, synth, man = _intra_setup({"y1": s}, g)
    pairs = build_intra_pairs(gt, synth, man, "dissimilar")
    assert len(pairs) == 1 and pairs[0].attribute_index == 7 and pairs[0].pair_kind == "intra"
    assert pairs[0].utterance_a == "g1" and pairs[0].utterance_b == "y1"
    gt, synth, man = _intra_setup({"y1": base()}, base())
    assert build_intra_pairs(gt, synth, man, "similar")[0].delta == 0.0


def test_intra_wer_selection():
    v1, v2 = base(), base()
    v1[0], v2[0] = 1.0, 0.0
    gt, synth, man = _intra_setup({"y1": v1, "y2": v2}, base())
    pairs = build_intra_pairs(gt, synth, man, "dissimilar", wer={"y1": 0.3, "y2": 0.1})
    assert pairs[0].utterance_b == "y2"
    with pytest.raises(ValidationError, match="selection policy"):
        build_intra_pairs(gt, synth, man, "dissimilar")
    chosen = select_synth_candidates(man[:1], man[1:], policy="first")
    assert chosen == {"g1": "y1"}


def test_pairs_file_round_trip(tmp_path):
    a, b = base(), base()
    a[3] = 0.9
    s = store_of({"u1": a, "u2": b})
    man = [UtteranceRecord("u1", "p1", "t1", "F"), UtteranceRecord("u2", "p2", "t1", "F")]
    pairs = build_inter_pairs(s, man, "dissimilar")
    write_pairs(pairs, tmp_path / "p.tsv")
    assert read_pairs(tmp_path / "p.tsv") == pairs


# --- ABX ------------------------------------------------------------------------

@pytest.fixture
def abx_setup(tmp_path):
    rng = np.random.default_rng(8)
    audio = tmp_path / "audio"
    audio.mkdir()
    vecs, man = {}, []
    for i in range(8):
        uid = f"u{i}"
        (audio / f"{uid}.wav").write_bytes(f"RIFF{i}".encode())
        vecs[uid] = rng.uniform(size=44)
        man.append(UtteranceRecord(uid, f"s{i}", "t", "F", f"{uid}.wav"))
    (audio / "noise_a.wav").write_bytes(b"noise")
    (audio / "noise_b.wav").write_bytes(b"voice")
    s = store_of(vecs)
    pairs = build_inter_pairs(s, man, "dissimilar", n_pairs=4, seed=0)
    fake = FakePair("noise_a.wav", "noise_b.wav", "human voice", "B")
    return s, man, pairs, fake, audio


def test_export_abx_cardinality_and_key(tmp_path, abx_setup):
    s, man, pairs, fake, audio = abx_setup
    pkg = export_abx(pairs, man, fake, tmp_path / "pkg", audio_root=audio, seed=5)
    assert len(pkg.trials) == 5
    real = [e for e in pkg.answer_key.values() if not e.is_fake]
    assert len(real) == 4 and sum(e.is_fake for e in pkg.answer_key.values()) == 1
    for e in real:
        va, vb = s[e.utterance_a][e.attribute_index], s[e.utterance_b][e.attribute_index]
        assert e.answer == ("A" if va >= vb else "B")
    for t in pkg.trials:
        assert (tmp_path / "pkg" / t.audio_a).is_file()
    assert read_answer_key(tmp_path / "pkg" / "answer_key.tsv") == pkg.answer_key
    trials_file = (tmp_path / "pkg" / "trials.tsv").read_text().splitlines()
    assert trials_file[0] == "trial_id\taudio_a\taudio_b\tlabel" and len(trials_file) == 6
    assert all(t.label in ATTRIBUTES or t.label == "human voice" for t in pkg.trials)


def test_export_abx_seeded(tmp_path, abx_setup):
    _, man, pairs, fake, audio = abx_setup
    a = export_abx(pairs, man, fake, tmp_path / "a", audio_root=audio, seed=5)
    b = export_abx(pairs, man, fake, tmp_path / "b", audio_root=audio, seed=5)
    assert a.trials == b.trials
    assert (tmp_path / "a" / "answer_key.tsv").read_bytes() == (tmp_path / "b" / "answer_key.tsv").read_bytes()


def test_export_abx_missing_audio(tmp_path, abx_setup):
    _, man, pairs, fake, audio = abx_setup
    (audio / "u0.wav").unlink()
    (audio / "u1.wav").unlink()
    with pytest.raises(FileNotFoundError, match="u0.wav"):
        export_abx(pairs, man, fake, tmp_path / "pkg", audio_root=audio)


def _key_responses(key, respondent):
    return [(respondent, tid, e.answer) for tid, e in key.items()]


def test_score_abx(tmp_path, abx_setup):
    _, man, pairs, fake, audio = abx_setup
    key = export_abx(pairs, man, fake, tmp_path / "pkg", audio_root=audio).answer_key
    good = _key_responses(key, "r1")
    assert score_abx(good, key).accuracy == 100.0

    flip = {"A": "B", "B": "A"}
    fake_id = next(t for t, e in key.items() if e.is_fake)
    cheater = [("r2", t, flip[c] if t == fake_id else c) for _, t, c in _key_responses(key, "r2")]
    res = score_abx(good + cheater, key)
    assert res.excluded_respondents == ["r2"] and res.n_responses == 4

    real = [t for t, e in key.items() if not e.is_fake]
    half = [("r3", fake_id, key[fake_id].answer)] + [
        ("r3", t, key[t].answer if i < 2 else flip[key[t].answer]) for i, t in enumerate(real)
    ]
    assert score_abx(half, key).accuracy == 50.0
    with pytest.raises(ValidationError):
        score_abx(cheater, key)
    with pytest.raises(ValidationError):
        score_abx([("r", "nope", "A")], key)
