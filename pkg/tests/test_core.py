import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from topkrank.core import Permutation, argsort_desc, ndcg_at_k, project_l2_ball, z_k
from topkrank.exceptions import InvalidInputError


def brute_force_z(R, k):
    """max over every ordering of the documents, straight from the definition."""
    best = 0.0
    for perm in itertools.permutations(range(len(R))):
        value = sum((2 ** R[perm[i]] - 1) / math.log2(i + 2) for i in range(k))
        best = max(best, value)
    return best


@pytest.mark.parametrize(
    "scores, expected",
    [((0.5, 0.9, 0.1), (1, 0, 2)), ((1.0, 1.0), (0, 1)), ((7.0,), (0,))],
)
def test_argsort_desc_examples(scores, expected):
    perm = argsort_desc(scores)
    assert perm.as_tuple() == expected
    assert all(perm.doc_to_rank[perm.rank_to_doc[i]] == i for i in range(len(scores)))


def test_argsort_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        argsort_desc([1.0, np.nan])
    with pytest.raises(InvalidInputError):
        argsort_desc([np.inf])


def test_argsort_ties_are_broken_by_index():
    assert argsort_desc([0.0, 2.0, 2.0, 0.0, 2.0]).as_tuple() == (1, 2, 4, 0, 3)


def test_permutation_rejects_non_bijection():
    with pytest.raises(InvalidInputError):
        Permutation.from_ranking([0, 0, 1])


def test_ndcg_examples():
    assert ndcg_at_k([3, 2, 1], [2, 1, 0], 3) == 1.0
    assert ndcg_at_k([1, 2], [1, 0], 1) == 0.0
    # ranking is doc 3, doc 2, doc 1
    dcg = 0 * 1 + 1 / math.log2(3) + 3 / math.log2(4)
    ideal = 3 / math.log2(2) + 1 / math.log2(3)
    assert ndcg_at_k([0, 1, 2], [2, 1, 0], 3) == pytest.approx(dcg / ideal, abs=1e-12)


def test_ndcg_is_zero_without_relevant_documents():
    assert ndcg_at_k([0.3, 0.1], [0, 0], 2) == 0.0


@pytest.mark.parametrize("k", [0, 4, 1.5])
def test_ndcg_rejects_bad_cutoff(k):
    with pytest.raises(InvalidInputError):
        ndcg_at_k([1, 2, 3], [0, 1, 2], k)


def test_z_k_examples():
    assert z_k([0, 0, 0], 2) == 0.0
    assert z_k([1, 1, 0], 3) == pytest.approx(brute_force_z([1, 1, 0], 3), abs=1e-15)
    assert z_k([1, 1, 0], 3) == pytest.approx(1 + 1 / math.log2(3), abs=1e-15)
    assert z_k([1], 1) == 1.0


def test_z_k_matches_brute_force(rng):
    for _ in range(40):
        m = int(rng.integers(1, 6))
        R = rng.integers(0, 5, size=m)
        k = int(rng.integers(1, m + 1))
        assert z_k(R, k) == pytest.approx(brute_force_z(list(R), k), rel=1e-14)


def test_ndcg_bounds_and_perfect_rankings(rng):
    for _ in range(30):
        m = int(rng.integers(1, 6))
        R = rng.integers(0, 4, size=m)
        k = int(rng.integers(1, m + 1))
        for perm in itertools.permutations(range(m)):
            s = np.empty(m)
            s[list(perm)] = np.arange(m, 0, -1)
            value = ndcg_at_k(s, R, k)
            assert 0.0 <= value <= 1.0 + 1e-15
            if R.any() and all(R[perm[i]] >= R[perm[i + 1]] for i in range(m - 1)):
                assert value == pytest.approx(1.0, abs=1e-15)


def test_projection_examples():
    np.testing.assert_array_equal(project_l2_ball([0.1, 0.2], 1.0), [0.1, 0.2])
    np.testing.assert_allclose(project_l2_ball([3.0, 4.0], 1.0), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(project_l2_ball([0.0, 0.0], 1.0), [0.0, 0.0])


vectors = arrays(np.float64, 4, elements=st.floats(-100, 100))


@settings(max_examples=200, deadline=None)
@given(vectors, vectors, st.floats(0.01, 50))
def test_projection_is_idempotent_and_non_expansive(a, b, radius):
    pa, pb = project_l2_ball(a, radius), project_l2_ball(b, radius)
    assert np.linalg.norm(pa) <= radius * (1 + 1e-12)
    np.testing.assert_allclose(project_l2_ball(pa, radius), pa, rtol=1e-12, atol=1e-12)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


def test_argsort_is_deterministic(rng):
    s = rng.integers(0, 3, size=50).astype(float)
    first = argsort_desc(s).as_tuple()
    assert all(argsort_desc(s.copy()).as_tuple() == first for _ in range(5))
