"""Classification scores and speaker-similarity metrics.

Sampling-based metrics draw from numpy's PCG64 generator, seeded per unit of
work with ``SeedSequence([seed, unit_index])`` so that results do not depend
on evaluation order.  Passing ``repeats=None`` (or an ``n_per_speaker`` at
least as large as every speaker) replaces sampling by the exact expectation
over every possible draw.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from vove.errors import ValidationError
from vove.store import JoinedStore

log = logging.getLogger(__name__)


def _rng(seed: int, unit: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, unit])))


# --- classification -----------------------------------------------------------


def _check_tau(tau: float):
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {tau}")


def binarize(v, tau: float) -> set[int]:
    """Indices with ``v_i >= tau``."""
    _check_tau(tau)
    return {int(i) for i in np.flatnonzero(np.asarray(v) >= tau)}


@dataclass
class ClassificationScores:
    threshold: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float
    n_samples: int = 0
    skipped: dict[str, int] = field(default_factory=dict)


def prf1(pred_sets: Sequence[set], gt_sets: Sequence[set], threshold: float = float("nan")) -> ClassificationScores:
    """Per-sample set precision/recall/F1, then mean and population std.

    Precision is undefined for an empty prediction, recall for an empty
    ground truth, F1 when both are empty; such samples are left out of that
    metric and counted in ``skipped``.
    """
    if len(pred_sets) != len(gt_sets):
        raise ValidationError(f"{len(pred_sets)} predictions vs {len(gt_sets)} ground truths")
    p, r, f = [], [], []
    for pred, gt in zip(pred_sets, gt_sets):
        hit = len(set(pred) & set(gt))
        if pred:
            p.append(hit / len(pred))
        if gt:
            r.append(hit / len(gt))
        if pred or gt:
            f.append(2 * hit / (len(pred) + len(gt)))
    skipped = {"precision": len(pred_sets) - len(p), "recall": len(pred_sets) - len(r), "f1": len(pred_sets) - len(f)}
    if not (p or r or f):
        raise ValidationError("every sample is degenerate (empty prediction and ground truth)")

    def stats(xs):
        if not xs:
            return float("nan"), float("nan")
        a = np.asarray(xs, dtype=np.float64)
        return float(a.mean()), float(a.std())

    return ClassificationScores(threshold, *stats(p), *stats(r), *stats(f), n_samples=len(pred_sets), skipped=skipped)


def classification_scores(pred: np.ndarray, gt: np.ndarray, tau: float) -> ClassificationScores:
    """Binarize predictions and soft ground truth with the same threshold, then score."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"prediction shape {pred.shape} != ground-truth shape {gt.shape}")
    return prf1([binarize(v, tau) for v in pred], [binarize(y, tau) for y in gt], tau)


# --- similarity ---------------------------------------------------------------


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("cosine undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = a if b is None else np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValidationError("cosine undefined for a zero vector")
    return np.clip((a @ b.T) / np.outer(na, nb), -1.0, 1.0)


def _eligible(groups: dict[str, list[int]], minimum: int, what: str) -> dict[str, list[int]]:
    kept = {s: rows for s, rows in groups.items() if len(rows) >= minimum}
    dropped = sorted(set(groups) - set(kept))
    if dropped:
        log.warning("%s: excluding %d speaker(s) with fewer than %d utterances: %s", what, len(dropped), minimum, dropped)
    return kept


def homogeneity(joined: JoinedStore, n_per_speaker: int = 100, seed: int = 0) -> float:
    """Mean within-speaker cosine over distinct utterance pairs, averaged over speakers."""
    groups = _eligible(joined.by_speaker(), 2, "homogeneity")
    if not groups:
        raise ValidationError("homogeneity needs at least one speaker with two utterances")
    per_speaker = []
    for unit, (speaker, rows) in enumerate(groups.items()):
        rows = np.asarray(rows)
        if len(rows) > n_per_speaker:
            rows = np.sort(_rng(seed, unit).choice(rows, size=n_per_speaker, replace=False))
        sim = cosine_matrix(joined.vectors[rows])
        iu = np.triu_indices(len(rows), k=1)
        per_speaker.append(sim[iu].mean())
    return float(np.mean(per_speaker))


def diversity(joined: JoinedStore, repeats: int | None = 100, seed: int = 0) -> float:
    """Mean cross-speaker cosine with one random utterance per speaker, averaged over repeats.

    ``repeats=None`` returns the expectation over all draws, which by
    linearity is the mean over speaker pairs of their mean cross-cosine.
    """
    groups = joined.by_speaker()
    if len(groups) < 2:
        raise ValidationError("diversity needs at least two speakers")
    members = list(groups.values())
    sim = cosine_matrix(joined.vectors)
    if repeats is None:
        vals = [
            sim[np.ix_(members[a], members[b])].mean()
            for a in range(len(members))
            for b in range(a + 1, len(members))
        ]
        return float(np.mean(vals))
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    iu = np.triu_indices(len(members), k=1)
    out = []
    for r in range(repeats):
        rng = _rng(seed, r)
        pick = np.array([rows[rng.integers(len(rows))] for rows in members])
        out.append(sim[np.ix_(pick, pick)][iu].mean())
    return float(np.mean(out))


def _beats(sim_q: np.ndarray, target: int, rows, ids: Sequence[str]) -> np.ndarray:
    """Whether each gallery candidate in ``rows`` outranks ``target`` for this query."""
    rows = np.asarray(rows)
    s_t = sim_q[target]
    higher = sim_q[rows] > s_t
    tie = (sim_q[rows] == s_t) & np.array([ids[j] < ids[target] for j in rows], dtype=bool)
    return higher | tie


def top_k_accuracy(
    joined: JoinedStore, ks: Iterable[int] = (1, 5, 10), repeats: int | None = 100, seed: int = 0
) -> dict[int, float]:
    """Percent of queries whose own speaker's gallery entry ranks within the top k.

    Each repeat draws a gallery of one utterance per speaker and, per
    speaker, a query from that speaker's remaining utterances.  Ties in
    similarity rank the smaller utterance id first.
    """
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise ValidationError("ks must be positive integers")
    groups = _eligible(joined.by_speaker(), 2, "top-k")
    if len(groups) < ks[-1]:
        raise ValidationError(f"top-k with k={ks[-1]} needs at least that many speakers, have {len(groups)}")
    members = list(groups.values())
    n_spk = len(members)
    ids = joined.ids
    sim = cosine_matrix(joined.vectors)

    if repeats is None:
        return _top_k_expected(sim, members, ids, ks)
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    hits = {k: 0 for k in ks}
    for r in range(repeats):
        rng = _rng(seed, r)
        gallery = np.empty(n_spk, dtype=int)
        queries = np.empty(n_spk, dtype=int)
        for s, rows in enumerate(members):
            g = rng.integers(len(rows))
            q = rng.integers(len(rows) - 1)
            q = q + 1 if q >= g else q
            gallery[s], queries[s] = rows[g], rows[q]
        for s in range(n_spk):
            others = np.delete(gallery, s)
            rank = int(_beats(sim[queries[s]], gallery[s], others, ids).sum())
            for k in ks:
                hits[k] += rank < k
    return {k: 100.0 * hits[k] / (repeats * n_spk) for k in ks}


def _top_k_expected(sim, members, ids, ks) -> dict[int, float]:
    # For fixed (query, true gallery entry) the other speakers beat it
    # independently, so the rank is Poisson-binomial.
    n_spk = len(members)
    acc = {k: 0.0 for k in ks}
    for s, rows in enumerate(members):
        p_hit = {k: 0.0 for k in ks}
        n_combos = len(rows) * (len(rows) - 1)
        for g in rows:
            for q in rows:
                if q == g:
                    continue
                dist = np.zeros(n_spk)
                dist[0] = 1.0
                for t, other in enumerate(members):
                    if t == s:
                        continue
                    p = _beats(sim[q], g, other, ids).mean()
                    dist[1:] = dist[1:] * (1 - p) + dist[:-1] * p
                    dist[0] *= 1 - p
                for k in ks:
                    p_hit[k] += dist[:k].sum() / n_combos
        for k in ks:
            acc[k] += p_hit[k] / n_spk
    return {k: 100.0 * acc[k] for k in ks}


@dataclass
class SimilarityReport:
    model_id: str
    dim: int
    n_utterances: int
    n_speakers: int
    homogeneity: float
    diversity: float
    topk: dict[int, float]
    seed: int
    n_per_speaker: int
    repeats: int | None

    def to_text(self) -> str:
        lines = [
            f"model_id={self.model_id}",
            f"dim={self.dim}",
            f"n_utterances={self.n_utterances}",
            f"n_speakers={self.n_speakers}",
            f"seed={self.seed}",
            f"n_per_speaker={self.n_per_speaker}",
            f"repeats={'exhaustive' if self.repeats is None else self.repeats}",
            f"homogeneity={self.homogeneity:.10f}",
            f"diversity={self.diversity:.10f}",
        ]
        lines += [f"top{k}_accuracy={v:.6f}" for k, v in sorted(self.topk.items())]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        d = asdict(self)
        d["topk"] = {str(k): v for k, v in sorted(self.topk.items())}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        ks = sorted(self.topk)
        head = f"{'Model':<10}{'Homogeneity':>13}{'Diversity':>11}" + "".join(f"{'top-' + str(k) + ' %':>10}" for k in ks)
        row = f"{self.model_id:<10}{self.homogeneity:>13.4f}{self.diversity:>11.4f}" + "".join(
            f"{self.topk[k]:>10.2f}" for k in ks
        )
        return head + "\n" + row + "\n"


def similarity_report(
    joined: JoinedStore, n_per_speaker: int = 100, repeats: int | None = 100, ks=(1, 5, 10), seed: int = 0
) -> SimilarityReport:
    return SimilarityReport(
        model_id=joined.store.model_id,
        dim=joined.store.dim,
        n_utterances=len(joined.ids),
        n_speakers=len(joined.by_speaker()),
        homogeneity=homogeneity(joined, n_per_speaker, seed),
        diversity=diversity(joined, repeats, seed),
        topk=top_k_accuracy(joined, ks, repeats, seed),
        seed=seed,
        n_per_speaker=n_per_speaker,
        repeats=repeats,
    )
