"""Independent reference implementations used to check the library."""

import itertools
import unicodedata


def lev(a: str, b: str) -> int:
    """Textbook full-matrix edit distance."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[len(a)][len(b)]


def normalize(s: str) -> str:
    chars = [" " if unicodedata.category(c).startswith("P") else c for c in s.casefold()]
    return " ".join("".join(chars).split())


def sim(a: str, b: str) -> float:
    a, b = normalize(a), normalize(b)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1 - lev(a, b) / max(len(a), len(b))


def best_assignment_total(m) -> float:
    """Max total over all injective row->column maps (rows may stay unmatched)."""
    rows = len(m)
    cols = len(m[0]) if rows else 0
    best = 0.0
    options = list(range(cols)) + [None] * rows
    for choice in set(itertools.permutations(options, rows)):
        best = max(best, sum(m[i][j] for i, j in enumerate(choice) if j is not None))
    return best
