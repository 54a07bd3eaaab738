"""Similar/dissimilar attribute pair sets and ABX listening-test packages.

ABX package layout (directory)::

    trials.tsv       trial_id  audio_a  audio_b  label
    answer_key.tsv   trial_id  answer(A|B)  is_fake  utterance_a  utterance_b  attribute_index  delta
    audio/           copies of every referenced file, renamed per trial

Responses are imported from a TSV with columns respondent_id, trial_id,
choice (A or B).
"""

from __future__ import annotations

import csv
import logging
import shutil
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from vove.attributes import ATTRIBUTE_INDEX, ATTRIBUTES, GENDER_ATTRIBUTES
from vove.errors import ParseError, ValidationError
from vove.store import EmbeddingStore, UtteranceRecord, join_manifest

log = logging.getLogger(__name__)

DISSIMILAR_THRESHOLD = 0.3
SIMILAR_THRESHOLD = 0.1
SET_KINDS = ("dissimilar", "similar")


@dataclass(frozen=True)
class PairItem:
    utterance_a: str
    utterance_b: str
    attribute_index: int
    delta: float
    pair_kind: str
    set_kind: str

    @property
    def attribute(self) -> str:
        return ATTRIBUTES[self.attribute_index]


def qualifying_mask(delta: np.ndarray, set_kind: str, dissimilar: float = DISSIMILAR_THRESHOLD,
                    similar: float = SIMILAR_THRESHOLD) -> np.ndarray:
    if set_kind == "dissimilar":
        return np.abs(delta) > dissimilar
    if set_kind == "similar":
        return np.abs(delta) < similar
    raise ValidationError(f"set_kind must be one of {SET_KINDS}, got {set_kind!r}")


def _allowed_dims(exclude_gender_attrs: bool) -> np.ndarray:
    allowed = np.ones(len(ATTRIBUTES), dtype=bool)
    if exclude_gender_attrs:
        allowed[[ATTRIBUTE_INDEX[a] for a in GENDER_ATTRIBUTES]] = False
    return allowed


def _sample_pairs(candidates, vecs, set_kind, n_pairs, seed, pair_kind, allowed, thresholds):
    """candidates: sorted list of (id_a, id_b) with vectors in ``vecs``."""
    qualified = []
    for a, b in candidates:
        delta = vecs[a].astype(np.float64) - vecs[b].astype(np.float64)
        dims = np.flatnonzero(qualifying_mask(delta, set_kind, *thresholds) & allowed)
        if dims.size:
            qualified.append((a, b, delta, dims))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    order = rng.permutation(len(qualified))[:n_pairs]
    if len(order) < n_pairs:
        log.warning("only %d qualifying %s %s pairs (requested %d)", len(order), pair_kind, set_kind, n_pairs)
    out = []
    for j in order:
        a, b, delta, dims = qualified[j]
        dim = int(dims[rng.integers(len(dims))])
        out.append(PairItem(a, b, dim, float(delta[dim]), pair_kind, set_kind))
    return out


def build_inter_pairs(
    store: EmbeddingStore,
    manifest: Sequence[UtteranceRecord],
    set_kind: str,
    n_pairs: int = 100,
    seed: int = 0,
    gender_control: bool = True,
    exclude_gender_attrs: bool = False,
    dissimilar_threshold: float = DISSIMILAR_THRESHOLD,
    similar_threshold: float = SIMILAR_THRESHOLD,
) -> list[PairItem]:
    """Pairs of same-text utterances from different speakers.

    With ``gender_control`` both speakers must share a known gender.  Each
    pair is labelled with one attribute drawn uniformly from the dimensions
    meeting the set threshold.
    """
    store.require_vove()
    qualifying_mask(np.zeros(1), set_kind)
    joined = join_manifest(store, manifest)
    by_text = defaultdict(list)
    for rec in joined.records:
        by_text[rec.text_id].append(rec)
    candidates = []
    for text_id in sorted(by_text):
        recs = sorted(by_text[text_id], key=lambda r: r.utterance_id)
        for i, ra in enumerate(recs):
            for rb in recs[i + 1:]:
                if ra.speaker_id == rb.speaker_id:
                    continue
                if gender_control and (ra.gender != rb.gender or ra.gender == "unknown"):
                    continue
                candidates.append((ra.utterance_id, rb.utterance_id))
    vecs = {uid: store.vectors[i] for i, uid in enumerate(store.ids)}
    return _sample_pairs(candidates, vecs, set_kind, n_pairs, seed, "inter",
                         _allowed_dims(exclude_gender_attrs), (dissimilar_threshold, similar_threshold))


def select_synth_candidates(
    gt_records: Sequence[UtteranceRecord],
    synth_records: Sequence[UtteranceRecord],
    wer: Mapping[str, float] | None = None,
    policy: str | None = None,
) -> dict[str, str]:
    """Map each ground-truth utterance to one synthesized utterance of the same speaker and text.

    Several candidates are resolved by lowest WER (ties by id) when ``wer``
    is given, or by smallest utterance id under ``policy="first"``.
    """
    if policy not in (None, "wer", "first"):
        raise ValidationError(f"unknown selection policy {policy!r}")
    synth_by_key = defaultdict(list)
    for r in synth_records:
        synth_by_key[(r.speaker_id, r.text_id)].append(r.utterance_id)
    chosen = {}
    for g in sorted(gt_records, key=lambda r: r.utterance_id):
        cands = sorted(synth_by_key.get((g.speaker_id, g.text_id), []))
        if not cands:
            continue
        if len(cands) == 1:
            chosen[g.utterance_id] = cands[0]
        elif wer is not None and policy in (None, "wer"):
            missing = [c for c in cands if c not in wer]
            if missing:
                raise ValidationError(f"WER table lacks synthesized candidates {missing}")
            chosen[g.utterance_id] = min(cands, key=lambda c: (wer[c], c))
        elif policy == "first":
            chosen[g.utterance_id] = cands[0]
        else:
            raise ValidationError(
                f"utterance {g.utterance_id!r} has {len(cands)} synthesized candidates; "
                "supply a WER table or an explicit selection policy"
            )
    return chosen


def build_intra_pairs(
    gt_store: EmbeddingStore,
    synth_store: EmbeddingStore,
    manifest: Sequence[UtteranceRecord],
    set_kind: str,
    n_pairs: int = 100,
    seed: int = 0,
    wer: Mapping[str, float] | None = None,
    policy: str | None = None,
    exclude_gender_attrs: bool = False,
    dissimilar_threshold: float = DISSIMILAR_THRESHOLD,
    similar_threshold: float = SIMILAR_THRESHOLD,
) -> list[PairItem]:
    """(ground truth, synthesized) pairs of the same speaker and text."""
    gt_store.require_vove()
    synth_store.require_vove()
    qualifying_mask(np.zeros(1), set_kind)
    overlap = set(gt_store.ids) & set(synth_store.ids)
    if overlap:
        raise ValidationError(f"utterance ids present in both stores: {sorted(overlap)}")
    gt = join_manifest(gt_store, manifest)
    synth = join_manifest(synth_store, manifest)
    chosen = select_synth_candidates(gt.records, synth.records, wer, policy)
    candidates = sorted(chosen.items())
    vecs = {uid: v for s in (gt_store, synth_store) for uid, v in zip(s.ids, s.vectors)}
    return _sample_pairs(candidates, vecs, set_kind, n_pairs, seed, "intra",
                         _allowed_dims(exclude_gender_attrs), (dissimilar_threshold, similar_threshold))


def write_pairs(pairs: Sequence[PairItem], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["utterance_a", "utterance_b", "attribute_index", "attribute", "delta", "pair_kind", "set_kind"])
        for p in pairs:
            w.writerow([p.utterance_a, p.utterance_b, p.attribute_index, p.attribute, repr(p.delta), p.pair_kind, p.set_kind])


def read_pairs(path) -> list[PairItem]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        rows = csv.DictReader(f, delimiter="\t")
        for lineno, row in enumerate(rows, 2):
            try:
                out.append(PairItem(row["utterance_a"], row["utterance_b"], int(row["attribute_index"]),
                                    float(row["delta"]), row["pair_kind"], row["set_kind"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad pair row ({exc})", path, lineno) from None
    return out


# --- ABX ----------------------------------------------------------------------


@dataclass(frozen=True)
class FakePair:
    """Operator-curated attention check; ``answer`` is the side a careful listener picks."""

    audio_a: str
    audio_b: str
    label: str
    answer: str = "A"

    def __post_init__(self):
        if self.answer not in ("A", "B"):
            raise ValidationError("fake pair answer must be 'A' or 'B'")


@dataclass(frozen=True)
class Trial:
    trial_id: str
    audio_a: str
    audio_b: str
    label: str


@dataclass(frozen=True)
class AnswerKeyEntry:
    trial_id: str
    answer: str
    is_fake: bool
    utterance_a: str = ""
    utterance_b: str = ""
    attribute_index: int = -1
    delta: float = 0.0

    @property
    def attribute(self) -> str:
        return "fake" if self.is_fake else ATTRIBUTES[self.attribute_index]


@dataclass
class AbxPackage:
    trials: list[Trial]
    answer_key: dict[str, AnswerKeyEntry]
    directory: Path | None = None


def export_abx(
    pairs: Sequence[PairItem],
    manifest: Sequence[UtteranceRecord],
    fake_pair: FakePair,
    out_dir,
    audio_root=None,
    seed: int = 0,
) -> AbxPackage:
    """Write a shuffled ABX package with one injected fake trial.

    The side on which each utterance is presented is randomized; the answer
    key records the side holding the higher attribute value (side A on an
    exact tie).
    """
    by_id = {r.utterance_id: r for r in manifest}
    root = Path(audio_root) if audio_root is not None else None

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() or root is None else root / path

    unknown = sorted({u for p in pairs for u in (p.utterance_a, p.utterance_b) if u not in by_id})
    if unknown:
        raise ValidationError(f"pair utterances missing from manifest: {unknown}")
    sources = [resolve(by_id[u].audio_path) for p in pairs for u in (p.utterance_a, p.utterance_b)]
    sources += [resolve(fake_pair.audio_a), resolve(fake_pair.audio_b)]
    missing = sorted({str(s) for s in sources if not s.is_file()})
    if missing:
        raise FileNotFoundError(f"missing audio files: {missing}")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    items: list = list(pairs) + [fake_pair]
    order = rng.permutation(len(items))
    flips = rng.integers(0, 2, size=len(items)).astype(bool)

    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    trials, key = [], {}
    width = max(3, len(str(len(items))))
    for pos, j in enumerate(order, 1):
        item = items[j]
        tid = f"t{pos:0{width}d}"
        if isinstance(item, FakePair):
            src_a, src_b, label = resolve(item.audio_a), resolve(item.audio_b), item.label
            entry = AnswerKeyEntry(tid, item.answer, True)
        else:
            ua, ub, delta = item.utterance_a, item.utterance_b, item.delta
            if flips[j]:
                ua, ub, delta = ub, ua, -delta
            src_a, src_b = resolve(by_id[ua].audio_path), resolve(by_id[ub].audio_path)
            label = item.attribute
            entry = AnswerKeyEntry(tid, "A" if delta >= 0 else "B", False, ua, ub, item.attribute_index, delta)
        name_a = f"{tid}_a{src_a.suffix}"
        name_b = f"{tid}_b{src_b.suffix}"
        shutil.copyfile(src_a, audio_dir / name_a)
        shutil.copyfile(src_b, audio_dir / name_b)
        trials.append(Trial(tid, f"audio/{name_a}", f"audio/{name_b}", label))
        key[tid] = entry

    with open(out_dir / "trials.tsv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["trial_id", "audio_a", "audio_b", "label"])
        for t in trials:
            w.writerow([t.trial_id, t.audio_a, t.audio_b, t.label])
    write_answer_key(key, out_dir / "answer_key.tsv")
    return AbxPackage(trials, key, out_dir)


def write_answer_key(key: Mapping[str, AnswerKeyEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["trial_id", "answer", "is_fake", "utterance_a", "utterance_b", "attribute_index", "delta"])
        for e in key.values():
            w.writerow([e.trial_id, e.answer, int(e.is_fake), e.utterance_a, e.utterance_b, e.attribute_index, repr(e.delta)])


def read_answer_key(path) -> dict[str, AnswerKeyEntry]:
    key = {}
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.DictReader(f, delimiter="\t"), 2):
            try:
                e = AnswerKeyEntry(row["trial_id"], row["answer"], row["is_fake"] == "1", row["utterance_a"],
                                   row["utterance_b"], int(row["attribute_index"]), float(row["delta"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad answer-key row ({exc})", path, lineno) from None
            key[e.trial_id] = e
    return key


def read_responses(path) -> list[tuple[str, str, str]]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.reader(f, delimiter="\t"), 1):
            if not row or (lineno == 1 and row[0] == "respondent_id"):
                continue
            if len(row) != 3 or row[2] not in ("A", "B"):
                raise ParseError("expected respondent_id, trial_id, choice in {A,B}", path, lineno)
            out.append((row[0], row[1], row[2]))
    return out


@dataclass
class AbxScore:
    accuracy: float
    n_responses: int
    per_attribute: dict[str, float]
    retained_respondents: list[str]
    excluded_respondents: list[str]


def score_abx(responses: Sequence[tuple[str, str, str]], answer_key: Mapping[str, AnswerKeyEntry]) -> AbxScore:
    """Percent of responses agreeing with the key, over respondents who passed the fake trial.

    A respondent who answered the fake trial wrongly, or never answered it,
    is excluded entirely.
    """
    fake_ids = {tid for tid, e in answer_key.items() if e.is_fake}
    by_resp: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for respondent, tid, choice in responses:
        if tid not in answer_key:
            raise ValidationError(f"response references unknown trial {tid!r}")
        by_resp[respondent].append((tid, choice))

    retained, excluded = [], []
    for respondent in sorted(by_resp):
        answers = by_resp[respondent]
        fake_answers = [(t, c) for t, c in answers if t in fake_ids]
        if fake_ids and (not fake_answers or any(c != answer_key[t].answer for t, c in fake_answers)):
            excluded.append(respondent)
        else:
            retained.append(respondent)

    total, correct = 0, 0
    per_attr_total: dict[str, int] = defaultdict(int)
    per_attr_correct: dict[str, int] = defaultdict(int)
    for respondent in retained:
        for tid, choice in by_resp[respondent]:
            entry = answer_key[tid]
            if entry.is_fake:
                continue
            ok = choice == entry.answer
            total += 1
            correct += ok
            per_attr_total[entry.attribute] += 1
            per_attr_correct[entry.attribute] += ok
    if total == 0:
        raise ValidationError("no retained responses to score")
    per_attribute = {a: 100.0 * per_attr_correct[a] / per_attr_total[a] for a in sorted(per_attr_total)}
    return AbxScore(100.0 * correct / total, total, per_attribute, retained, excluded)
