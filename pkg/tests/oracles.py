"""Independent oracles frozen into the test suite.

Implementations here deliberately avoid the package's own code paths:
IoU is computed over explicit token index sets, and maximum matching is
found by exhaustive recursion (and, where tests want a second opinion,
networkx's Hopcroft-Karp).
"""

from __future__ import annotations

import random
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from haldet.evaluator import LabeledSpan


def oracle_iou(a: LabeledSpan, b: LabeledSpan) -> Fraction:
    sa = set(range(a.start, a.end))
    sb = set(range(b.start, b.end))
    union = sa | sb
    if not union:
        return Fraction(0)
    return Fraction(len(sa & sb), len(union))


def _eligible_pairs(
    gold: Sequence[LabeledSpan], pred: Sequence[LabeledSpan], threshold: Fraction
) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {}
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred):
            if g.label == p.label and oracle_iou(g, p) >= threshold:
                adj.setdefault(gi, []).append(pi)
    return adj


def brute_force_max_matching(
    gold: Sequence[LabeledSpan], pred: Sequence[LabeledSpan], threshold: Fraction
) -> int:
    """Exhaustive maximum-cardinality matching size over eligible pairs."""
    adj = _eligible_pairs(gold, pred, threshold)
    gold_ids = sorted(adj)

    @lru_cache(maxsize=None)
    def best(i: int, used: frozenset) -> int:
        if i == len(gold_ids):
            return 0
        gi = gold_ids[i]
        top = best(i + 1, used)
        for pi in adj[gi]:
            if pi not in used:
                top = max(top, 1 + best(i + 1, used | {pi}))
        return top

    result = best(0, frozenset())
    best.cache_clear()
    return result


def networkx_max_matching(
    gold: Sequence[LabeledSpan], pred: Sequence[LabeledSpan], threshold: Fraction
) -> int:
    import networkx as nx

    adj = _eligible_pairs(gold, pred, threshold)
    graph = nx.Graph()
    top = set()
    for gi, pis in adj.items():
        top.add(("g", gi))
        for pi in pis:
            graph.add_edge(("g", gi), ("p", pi))
    if not graph:
        return 0
    matching = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=top)
    return len(matching) // 2


def random_label_runs(rng: random.Random, max_len: int = 40, max_runs: int = 16) -> list[int]:
    """Random binary label sequence with at most max_runs runs, so each
    class contributes at most max_runs/2 spans."""
    length = rng.randint(1, max_len)
    n_cuts = min(rng.randint(0, max_runs - 1), length - 1)
    cuts = sorted(rng.sample(range(1, length), n_cuts)) if n_cuts else []
    label = rng.randint(0, 1)
    labels = []
    prev = 0
    for cut in cuts + [length]:
        labels.extend([label] * (cut - prev))
        label ^= 1
        prev = cut
    return labels
