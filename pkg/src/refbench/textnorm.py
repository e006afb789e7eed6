"""Normalization, name canonicalization and the Levenshtein similarity used by
every matching and scoring step."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

LIST_FIELDS = ("authors", "editors")


def normalize_text(s: str) -> str:
    """Case-fold, turn each punctuation character into a space, collapse whitespace."""
    if not s:
        return ""
    s = s.casefold()
    s = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in s)
    return " ".join(s.split())


@numba.njit(cache=True, nogil=True)
def _lev_codes(a, b):
    n, m = a.shape[0], b.shape[0]
    if n < m:
        a, b, n, m = b, a, m, n
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, dtype=prev.dtype)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            v = prev[j - 1] + cost
            if prev[j] + 1 < v:
                v = prev[j] + 1
            if cur[j - 1] + 1 < v:
                v = cur[j - 1] + 1
            cur[j] = v
        prev, cur = cur, prev
    return prev[m]


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points."""
    if a == b:
        return 0
    if not a or not b:
        return len(a) + len(b)
    return int(_lev_codes(_codes(a), _codes(b)))


@lru_cache(maxsize=65536)
def _normalized(s: str) -> str:
    return normalize_text(s)


def normalized_similarity(a: str, b: str) -> float:
    """Similarity of two already-normalized strings."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    if a == b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def string_similarity(a: str, b: str) -> float:
    """1 - lev(a, b) / max(|a|, |b|) on normalized text; 1.0 when both are empty."""
    return normalized_similarity(_normalized(a or ""), _normalized(b or ""))


@dataclass(frozen=True)
class CanonicalName:
    tokens: tuple[str, ...]
    # index where the comma-delimited surname block starts (always 0 when set)
    surname_hint: int | None = None
    surname_len: int = 0

    @property
    def empty(self) -> bool:
        return not self.tokens

    def orderings(self) -> list[str]:
        """The as-given token string, plus the surname block rotated to the end."""
        given = " ".join(self.tokens)
        if self.surname_hint is None or self.surname_len >= len(self.tokens):
            return [given]
        rotated = self.tokens[self.surname_len:] + self.tokens[: self.surname_len]
        return [given, " ".join(rotated)]


def canonicalize_name(s: str) -> CanonicalName:
    s = s or ""
    if "," in s:
        surname, rest = s.split(",", 1)
        sur_tokens = normalize_text(surname).split()
        rest_tokens = normalize_text(rest).split()
        if sur_tokens:
            return CanonicalName(tuple(sur_tokens + rest_tokens), surname_hint=0, surname_len=len(sur_tokens))
        return CanonicalName(tuple(rest_tokens))
    return CanonicalName(tuple(normalize_text(s).split()))


def name_similarity(g: CanonicalName, p: CanonicalName) -> float:
    if g.empty and p.empty:
        return 1.0
    if g.empty or p.empty:
        return 0.0
    if sorted(g.tokens) == sorted(p.tokens):
        return 1.0
    return max(normalized_similarity(a, b) for a in g.orderings() for b in p.orderings())


def author_list_similarity(gold: list[str], pred: list[str]) -> float:
    """Optimal one-to-one name matching; total similarity over max(|gold|, |pred|)."""
    from refbench.matching import optimal_assignment

    if not gold and not pred:
        return 1.0
    if not gold or not pred:
        return 0.0
    gnames = [canonicalize_name(n) for n in gold]
    pnames = [canonicalize_name(n) for n in pred]
    m = [[name_similarity(g, p) for p in pnames] for g in gnames]
    pairing = optimal_assignment(m)
    return pairing.total / max(len(gold), len(pred))


def field_similarity(field_id: str, gold_value, pred_value, exact_year: bool = False) -> float:
    if field_id in LIST_FIELDS:
        return author_list_similarity(list(gold_value), list(pred_value))
    if field_id == "year" and exact_year:
        return 1.0 if normalize_text(gold_value) == normalize_text(pred_value) else 0.0
    return string_similarity(gold_value, pred_value)
