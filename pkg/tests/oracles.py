"""Brute-force reference implementations, deliberately naive and loop-based."""

import itertools
import math
from fractions import Fraction

LEVELS = ("none", "slightly", "normal", "very")
# exact weights as fractions, kept apart from the package's float table
WEIGHT = {"very": Fraction(3, 2), "normal": Fraction(5, 4), "slightly": Fraction(1, 2), "none": Fraction(0)}
RANK = {name: i for i, name in enumerate(LEVELS)}


def soft_degree(triple):
    s = sum(WEIGHT[t] for t in triple) / 3
    return float(min(max(s, Fraction(0)), Fraction(1)))


def is_hard_by_rule(triple):
    """At least two 'very', or sorted triple dominates (normal, normal, slightly)."""
    if sum(t == "very" for t in triple) >= 2:
        return True
    desc = sorted((RANK[t] for t in triple), reverse=True)
    floor = sorted((RANK[t] for t in ("normal", "normal", "slightly")), reverse=True)
    return all(a >= b for a, b in zip(desc, floor))


def cos(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def groups(items):
    """items: list of (utterance_id, speaker_id, vector) -> {speaker: [(id, vec), ...]} sorted."""
    out = {}
    for uid, spk, vec in sorted(items):
        out.setdefault(spk, []).append((uid, vec))
    return dict(sorted(out.items()))


def homogeneity(items):
    per = []
    for members in groups(items).values():
        if len(members) < 2:
            continue
        sims = [cos(a[1], b[1]) for a, b in itertools.combinations(members, 2)]
        per.append(sum(sims) / len(sims))
    return sum(per) / len(per)


def diversity(items):
    g = list(groups(items).values())
    totals = []
    for choice in itertools.product(*g):
        sims = [cos(a[1], b[1]) for a, b in itertools.combinations(choice, 2)]
        totals.append(sum(sims) / len(sims))
    return sum(totals) / len(totals)


def top_k(items, ks):
    """Exact expectation over every gallery draw and every query draw."""
    g = [m for m in groups(items).values() if len(m) >= 2]
    n = len(g)
    hits = {k: 0.0 for k in ks}
    total_weight = 0.0
    for gallery in itertools.product(*g):
        query_options = [[u for u in members if u[0] != gallery[s][0]] for s, members in enumerate(g)]
        for queries in itertools.product(*query_options):
            total_weight += 1
            for s in range(n):
                q = queries[s][1]
                ranked = sorted(gallery, key=lambda e: (-cos(q, e[1]), e[0]))
                pos = [e[0] for e in ranked].index(gallery[s][0])
                for k in ks:
                    hits[k] += (pos < k) / n
    return {k: 100.0 * hits[k] / total_weight for k in ks}
