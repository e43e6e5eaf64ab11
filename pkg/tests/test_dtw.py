import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penlive import dtw as dtw_mod
from penlive._dtw_py import dtw as dtw_py
from penlive.dtw import DtwConfig, classify_1nn, dtw_distance, nn_liveness_score
from penlive.errors import EmptyReferenceSet, EmptySequence
from penlive.features import VelocitySequence


def brute_force_dtw(a, b):
    """Exhaustive enumeration of monotone alignment paths (no memoization)."""
    n, m = len(a), len(b)

    def walk(i, j):
        cost = abs(a[i] - b[j])
        if i == n - 1 and j == m - 1:
            return cost
        best = math.inf
        if i + 1 < n:
            best = min(best, walk(i + 1, j))
        if j + 1 < m:
            best = min(best, walk(i, j + 1))
        if i + 1 < n and j + 1 < m:
            best = min(best, walk(i + 1, j + 1))
        return cost + best

    return walk(0, 0)


def seq(vals, label="human"):
    return VelocitySequence(values=np.asarray(vals, dtype=float), label=label)


def test_identical_sequences_cost_zero():
    assert dtw_distance(seq([1, 2, 3]), seq([1, 2, 3])) == 0.0


def test_single_against_pair():
    assert dtw_distance(seq([0]), seq([1, 1])) == 2.0


def test_warped_match_is_free():
    assert dtw_distance(seq([1, 2, 3]), seq([1, 2, 2, 3])) == 0.0
    assert brute_force_dtw([1, 2, 3], [1, 2, 2, 3]) == 0.0


def test_empty_sequence_rejected():
    with pytest.raises(EmptySequence):
        dtw_distance(np.array([]), seq([1.0]))


def test_matches_brute_force_on_small_alphabet():
    rng = np.random.default_rng(0)
    for _ in range(400):
        a = rng.integers(0, 3, size=rng.integers(1, 7)).astype(float)
        b = rng.integers(0, 3, size=rng.integers(1, 7)).astype(float)
        assert dtw_distance(a, b) == pytest.approx(brute_force_dtw(list(a), list(b)), abs=1e-12)


def test_backends_agree_bitwise():
    rng = np.random.default_rng(1)
    for _ in range(30):
        a = rng.random(rng.integers(1, 80))
        b = rng.random(rng.integers(1, 80))
        assert dtw_mod._kernel.dtw(a, b, -1, math.inf) == dtw_py(a, b)
    for band in (0, 3, 10):
        a, b = rng.random(40), rng.random(44)
        assert dtw_mod._kernel.dtw(a, b, band, math.inf) == dtw_py(a, b, band)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20),
       st.lists(st.floats(0, 100), min_size=1, max_size=20))
def test_symmetry(xs, ys):
    assert dtw_distance(seq(xs), seq(ys)) == pytest.approx(
        dtw_distance(seq(ys), seq(xs)), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20, unique=True))
def test_diagonal_path_upper_bounds_equal_lengths(xs):
    rng = np.random.default_rng(len(xs))
    ys = list(rng.permutation(xs))
    assert dtw_distance(seq(xs), seq(ys)) <= sum(abs(x - y) for x, y in zip(xs, ys)) + 1e-9


def test_band_never_below_unbanded():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.random(20), rng.random(25)
        full = dtw_distance(a, b)
        banded = dtw_distance(a, b, DtwConfig(band_radius=int(rng.integers(0, 12))))
        assert banded >= full - 1e-12


def test_band_blocks_unreachable_alignments():
    assert dtw_distance(np.zeros(3), np.zeros(10), DtwConfig(band_radius=2)) == math.inf


def test_early_abandon_exact_below_bound():
    rng = np.random.default_rng(3)
    cfg = DtwConfig(early_abandon=True)
    for _ in range(40):
        a, b = rng.random(30), rng.random(30)
        exact = dtw_distance(a, b)
        pruned = dtw_distance(a, b, cfg, upper_bound=exact + 1.0)
        assert pruned == exact
        hard = dtw_distance(a, b, cfg, upper_bound=exact * 0.25)
        assert hard == math.inf or hard <= exact * 0.25


class TestClassify1nn:
    REFS = [seq([0, 0, 0], "synthetic"), seq([1, 2, 3], "human"), seq([5, 5], "synthetic")]

    def test_exact_match_wins(self):
        label, cost = classify_1nn(seq([1, 2, 3]), self.REFS)
        assert (label, cost) == ("human", 0.0)

    def test_tie_goes_to_lowest_index(self):
        refs = [seq([2.0], "synthetic"), seq([4.0], "human")]
        label, cost = classify_1nn(seq([3.0]), refs)
        assert (label, cost) == ("synthetic", 1.0)

    def test_empty_reference_set(self):
        with pytest.raises(EmptyReferenceSet):
            classify_1nn(seq([1.0]), [])

    def test_liveness_score_sign(self):
        label, cost, score = nn_liveness_score(seq([1, 2, 3]), self.REFS)
        assert label == "human" and cost == 0.0 and score > 0
        label2, _, score2 = nn_liveness_score(seq([0, 0, 0]), self.REFS)
        assert label2 == "synthetic" and score2 < 0

    def test_early_abandon_matches_exact_scores(self):
        rng = np.random.default_rng(4)
        refs = [seq(rng.random(rng.integers(5, 30)), "human" if i % 2 else "synthetic")
                for i in range(12)]
        q = seq(rng.random(20))
        plain = nn_liveness_score(q, refs, DtwConfig())
        pruned = nn_liveness_score(q, refs, DtwConfig(early_abandon=True))
        assert plain == pruned
