"""Soft one-to-one matching of gold and predicted items and string-level
extraction scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from refbench.errors import SizeExceeded
from refbench.textnorm import _normalized, normalized_similarity

# Totals closer than this are treated as ties.
TIE_TOL = 1e-12
BRUTE_FORCE_MAX = 8


@dataclass
class Pairing:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_gold: list[int] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)

    @property
    def total(self) -> float:
        return math.fsum(s for _, _, s in self.pairs)

    def pred_for_gold(self) -> dict[int, int]:
        return {g: p for g, p, _ in self.pairs}


@dataclass
class ExtractionScore:
    precision: float
    recall: float
    f1: float
    avg_sim: float | None
    n_gold: int
    n_pred: int
    n_matched: int
    tp: float = 0.0

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "avg_sim": self.avg_sim,
            "n_gold": self.n_gold,
            "n_pred": self.n_pred,
            "n_matched": self.n_matched,
            "tp": self.tp,
        }


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def similarity_matrix(gold: list[str], pred: list[str]) -> np.ndarray:
    gn = [_normalized(s) for s in gold]
    pn = [_normalized(s) for s in pred]
    m = np.zeros((len(gn), len(pn)), dtype=float)
    for i, g in enumerate(gn):
        for j, p in enumerate(pn):
            m[i, j] = normalized_similarity(g, p)
    return m


def _best_total(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(m, maximize=True)
    return math.fsum(m[rows, cols])


def _finish(pairs, n_rows, n_cols) -> Pairing:
    used_g = {g for g, _, _ in pairs}
    used_p = {p for _, p, _ in pairs}
    return Pairing(
        pairs=sorted(pairs),
        unmatched_gold=[i for i in range(n_rows) if i not in used_g],
        unmatched_pred=[j for j in range(n_cols) if j not in used_p],
    )


def optimal_assignment(m) -> Pairing:
    """Maximum-total one-to-one pairing of rows (gold) and columns (predictions).

    Zero-similarity pairs are left unmatched. Among pairings with the same
    total, the one whose (gold, pred) pair list is lexicographically smallest
    is returned, fixing rows in document order.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        m = m.reshape(0, 0) if m.size == 0 else m
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        return _finish([], n_rows, n_cols)

    free = list(range(n_cols))
    target = _best_total(m)
    pairs = []
    for i in range(n_rows):
        rest = m[i + 1 :][:, free]
        without_i = _best_total(rest)
        # Upper bound on what forcing any column can add: a column that cannot
        # reach the marginal value of row i is never part of an optimum.
        marginal = target - without_i
        chosen = None
        for pos, j in enumerate(free):
            s = m[i, j]
            if s <= 0.0 or s < marginal - TIE_TOL * (1 + abs(target)):
                continue
            remaining = free[:pos] + free[pos + 1 :]
            value = s + _best_total(m[i + 1 :][:, remaining])
            if value >= target - TIE_TOL * (1 + abs(target)):
                chosen = (pos, j, s)
                break
        if chosen is None:
            target = without_i
            continue
        pos, j, s = chosen
        pairs.append((i, j, float(s)))
        free.pop(pos)
        target -= s
    return _finish(pairs, n_rows, n_cols)


def brute_force_assignment(m) -> Pairing:
    """Exhaustive search over injective mappings; test oracle for small matrices."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        n_rows, n_cols = (m.shape if m.ndim == 2 else (0, 0))
        return _finish([], n_rows, n_cols)
    n_rows, n_cols = m.shape
    if max(n_rows, n_cols) > BRUTE_FORCE_MAX:
        raise SizeExceeded(f"brute force limited to {BRUTE_FORCE_MAX}x{BRUTE_FORCE_MAX}")
    best = {"total": -1.0, "pairs": None}
    used = [False] * n_cols

    def visit(i, pairs, total):
        if i == n_rows:
            tol = TIE_TOL * (1 + abs(total))
            if best["pairs"] is None or total > best["total"] + tol:
                best["total"], best["pairs"] = total, list(pairs)
            elif abs(total - best["total"]) <= tol and _key(pairs) < _key(best["pairs"]):
                best["total"], best["pairs"] = total, list(pairs)
            return
        # Positive columns in ascending order, then "unmatched": this visits
        # pair lists in lexicographic order.
        for j in range(n_cols):
            if not used[j] and m[i, j] > 0.0:
                used[j] = True
                pairs.append((i, j, float(m[i, j])))
                visit(i + 1, pairs, math.fsum(s for _, _, s in pairs))
                pairs.pop()
                used[j] = False
        visit(i + 1, pairs, total)

    visit(0, [], 0.0)
    best_pairs = best["pairs"]
    return _finish(best_pairs, n_rows, n_cols)


def _key(pairs):
    return [(g, p) for g, p, _ in pairs]


def score_pairing(pairing: Pairing, n_gold: int, n_pred: int, binary_threshold: float | None = None) -> ExtractionScore:
    if binary_threshold is None:
        sims = [s for _, _, s in pairing.pairs]
    else:
        sims = [1.0 if s >= binary_threshold else 0.0 for _, _, s in pairing.pairs]
    tp = math.fsum(sims)
    precision = tp / n_pred if n_pred else 0.0
    if n_gold:
        recall = tp / n_gold
    else:
        recall = 1.0 if n_pred == 0 else 0.0
    if n_gold == 0 and n_pred == 0:
        precision = 1.0
    n_matched = len(pairing.pairs)
    return ExtractionScore(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        avg_sim=(tp / n_matched) if n_matched else None,
        n_gold=n_gold,
        n_pred=n_pred,
        n_matched=n_matched,
        tp=tp,
    )


def score_extraction(gold: list[str], pred: list[str], binary_threshold: float | None = None) -> ExtractionScore:
    """Partial-credit P/R/F1: TP is the summed similarity of the optimal pairs."""
    pairing = optimal_assignment(similarity_matrix(gold, pred))
    return score_pairing(pairing, len(gold), len(pred), binary_threshold)


def pool_extraction(scores: list[ExtractionScore]) -> ExtractionScore:
    """Corpus-level extraction score pooled over documents."""
    tp = math.fsum(s.tp for s in scores)
    n_gold = sum(s.n_gold for s in scores)
    n_pred = sum(s.n_pred for s in scores)
    n_matched = sum(s.n_matched for s in scores)
    precision = tp / n_pred if n_pred else (1.0 if n_gold == 0 else 0.0)
    recall = tp / n_gold if n_gold else (1.0 if n_pred == 0 else 0.0)
    return ExtractionScore(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        avg_sim=(tp / n_matched) if n_matched else None,
        n_gold=n_gold,
        n_pred=n_pred,
        n_matched=n_matched,
        tp=tp,
    )
