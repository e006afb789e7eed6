import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from refbench.errors import SizeExceeded
from refbench.matching import (
    brute_force_assignment,
    optimal_assignment,
    score_extraction,
    similarity_matrix,
)


def test_similarity_matrix_examples():
    assert similarity_matrix(["a"], ["a"]).tolist() == [[1.0]]
    assert similarity_matrix(["aa"], ["ab", "aa"]).tolist() == [[0.5, 1.0]]
    assert similarity_matrix([], ["x"]).shape == (0, 1)


def test_optimal_assignment_examples():
    p = optimal_assignment([[0.9, 0.2], [0.3, 0.8]])
    assert p.pairs == [(0, 0, 0.9), (1, 1, 0.8)]
    assert p.total == pytest.approx(1.7)
    assert optimal_assignment([[1, 0], [0, 1]]).pairs == [(0, 0, 1.0), (1, 1, 1.0)]
    p = optimal_assignment([[0.4, 0.9]])
    assert p.pairs == [(0, 1, 0.9)] and p.unmatched_pred == [0]


def test_zero_pairs_are_unmatched():
    p = optimal_assignment([[0.0, 0.0], [0.0, 0.5]])
    assert p.pairs == [(1, 1, 0.5)]
    assert p.unmatched_gold == [0] and p.unmatched_pred == [0]


def test_tie_break_prefers_document_order():
    # every perfect matching totals 2.0; the lexicographically first is the diagonal
    assert optimal_assignment(np.ones((2, 2))).pairs == [(0, 0, 1.0), (1, 1, 1.0)]
    m = [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]]
    assert [(g, p) for g, p, _ in optimal_assignment(m).pairs] == [(0, 0), (1, 1)]


def test_brute_force_examples():
    assert brute_force_assignment([[1.0]]).pairs == [(0, 0, 1.0)]
    p = brute_force_assignment(np.zeros((0, 0)))
    assert p.pairs == [] and p.total == 0.0
    with pytest.raises(SizeExceeded):
        brute_force_assignment(np.ones((9, 2)))


matrices = st.integers(0, 5).flatmap(
    lambda r: st.integers(0, 5).flatmap(
        lambda c: st.lists(
            st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0, 0.3333]), min_size=c, max_size=c),
            min_size=r, max_size=r)
    )
)


@settings(max_examples=200)
@given(matrices)
def test_assignment_agrees_with_oracles(m):
    cols = len(m[0]) if m else 0
    arr = np.array(m, dtype=float).reshape(len(m), cols)
    fast, slow = optimal_assignment(arr), brute_force_assignment(arr)
    expected = oracles.best_assignment_total(m) if m and cols else 0.0
    assert fast.total == pytest.approx(expected, abs=1e-9)
    # coarse values create many ties: the tie-break must pick the same pairing
    assert [(g, p) for g, p, _ in fast.pairs] == [(g, p) for g, p, _ in slow.pairs]


@given(matrices, st.randoms(use_true_random=False))
def test_decreasing_entries_never_increases_total(m, rnd):
    if not m or not m[0]:
        return
    arr = np.array(m, dtype=float)
    lowered = arr * np.array([[rnd.random() for _ in row] for row in m])
    assert optimal_assignment(lowered).total <= optimal_assignment(arr).total + 1e-12


def test_score_extraction_examples():
    s = score_extraction(["A", "B"], ["A", "B"])
    assert (s.precision, s.recall, s.f1, s.avg_sim) == (1.0, 1.0, 1.0, 1.0)
    s = score_extraction(["A", "B"], ["A", "B", "B"])
    assert s.tp == 2.0 and s.precision == 2 / 3 and s.recall == 1.0 and s.f1 == pytest.approx(0.8, abs=1e-15)
    s = score_extraction(["A"], [])
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    s = score_extraction([], [])
    assert (s.precision, s.recall) == (1.0, 1.0)


def test_binary_threshold():
    s = score_extraction(["kitten"], ["sitting"], binary_threshold=0.5)
    assert s.tp == 1.0
    s = score_extraction(["kitten"], ["sitting"], binary_threshold=0.6)
    assert s.tp == 0.0


refs = st.lists(st.sampled_from(["Weber 1922", "Cozzi 1982", "Ebd., S. 3", "Doe 2020", "Roe 2021"]), min_size=1,
                max_size=5, unique=True)


@given(refs, st.data())
def test_duplicate_prediction_never_helps(gold, data):
    # every gold string is already matched, so a duplicate has nothing left to pair with
    pred = data.draw(st.permutations(gold))
    base = score_extraction(gold, pred)
    dup = score_extraction(gold, pred + [data.draw(st.sampled_from(pred))])
    assert dup.tp == pytest.approx(base.tp)
    assert dup.precision < base.precision
