import itertools
import math

import numpy as np
import pytest

from topkrank.core import Permutation
from topkrank.exceptions import InvalidConfigError, InvalidInputError
from topkrank.sampling import (
    ExplicitDistribution,
    MixtureDistribution,
    extract_feedback,
    pair_marginal_sum,
    prefix_marginal,
    sample_action,
)


def brute_force_mixture(exploit, gamma):
    """P(pi) written out for every ranking, independent of the closed forms."""
    m = len(exploit)
    return {
        perm: (1 - gamma) * (perm == tuple(exploit)) + gamma / math.factorial(m)
        for perm in itertools.permutations(range(m))
    }


def brute_prefix(table, prefix):
    return math.fsum(p for perm, p in table.items() if perm[: len(prefix)] == tuple(prefix))


def test_top1_marginal_matched_case():
    exploit = (3, 0, 4, 1, 2)
    dist = MixtureDistribution(exploit, 0.5)
    assert prefix_marginal(dist, (3,)) == pytest.approx(0.6, abs=1e-15)
    assert prefix_marginal(dist, (3,)) == pytest.approx(1 - 0.5 + 0.5 / 5, abs=1e-15)


def test_top1_marginal_unmatched_case():
    exploit = (3, 0, 4, 1, 2)
    table = brute_force_mixture(exploit, 0.5)
    dist = MixtureDistribution(exploit, 0.5)
    for j in (0, 1, 2, 4):
        assert brute_prefix(table, (j,)) == pytest.approx(0.1, abs=1e-14)
        assert prefix_marginal(dist, (j,)) == pytest.approx(0.1, abs=1e-15)


def test_single_document_marginals_sum_to_one(rng):
    for m in range(1, 6):
        dist = MixtureDistribution(rng.permutation(m), float(rng.uniform(0.01, 0.99)))
        assert math.fsum(prefix_marginal(dist, (j,)) for j in range(m)) == pytest.approx(1.0, abs=1e-14)
        table = dist.to_table()
        assert math.fsum(prefix_marginal(table, (j,)) for j in range(m)) == pytest.approx(1.0, abs=1e-14)


def test_pair_marginal_sum_cases():
    exploit = (2, 4, 0, 1, 3)
    dist = MixtureDistribution(exploit, 0.5)
    table = brute_force_mixture(exploit, 0.5)
    assert pair_marginal_sum(dist, 2, 4) == pytest.approx(0.55, abs=1e-15)
    assert pair_marginal_sum(dist, 4, 2) == pytest.approx(1 - 0.5 + 2 * 0.5 / 20, abs=1e-15)
    brute = brute_prefix(table, (0, 1)) + brute_prefix(table, (1, 0))
    assert brute == pytest.approx(0.05, abs=1e-14)
    assert pair_marginal_sum(dist, 0, 1) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(InvalidInputError):
        pair_marginal_sum(dist, 1, 1)


def test_pair_marginal_sum_uniform():
    for m in (2, 3, 4, 5):
        dist = ExplicitDistribution.uniform(m)
        for i, j in itertools.combinations(range(m), 2):
            assert pair_marginal_sum(dist, i, j) == pytest.approx(2 / (m * (m - 1)), abs=1e-14)


def test_closed_form_matches_table(rng):
    for m in range(1, 7):
        for _ in range(3):
            exploit = tuple(int(j) for j in rng.permutation(m))
            gamma = float(rng.uniform(0.001, 0.999))
            dist = MixtureDistribution(exploit, gamma)
            table = brute_force_mixture(exploit, gamma)
            for k in range(1, min(m, 3) + 1):
                for prefix in itertools.permutations(range(m), k):
                    assert dist.prefix_marginal(prefix) == pytest.approx(
                        brute_prefix(table, prefix), abs=1e-12
                    )


def test_marginalization_consistency(rng):
    for m in range(2, 6):
        table = ExplicitDistribution(m, dict(zip(
            itertools.permutations(range(m)),
            rng.dirichlet(np.ones(math.factorial(m))),
        )))
        mix = MixtureDistribution(rng.permutation(m), 0.3)
        for dist in (table, mix):
            for k in range(1, m):
                for prefix in itertools.permutations(range(m), k):
                    children = [prefix + (j,) for j in range(m) if j not in prefix]
                    total = math.fsum(dist.prefix_marginal(c) for c in children)
                    assert dist.prefix_marginal(prefix) == pytest.approx(total, abs=1e-12)


def test_mixture_marginals_are_bounded_below(rng):
    for m in range(2, 8):
        gamma = float(rng.uniform(0.01, 0.5))
        dist = MixtureDistribution(rng.permutation(m), gamma)
        for k in (1, 2):
            floor = gamma * math.factorial(m - k) / math.factorial(m)
            for prefix in itertools.permutations(range(m), k):
                assert dist.prefix_marginal(prefix) >= floor * (1 - 1e-12)


def test_prefix_rejects_duplicates():
    with pytest.raises(InvalidInputError):
        prefix_marginal(MixtureDistribution((0, 1, 2), 0.2), (1, 1))


def test_explicit_table_validation():
    with pytest.raises(InvalidInputError):
        ExplicitDistribution(2, {(0, 1): 0.5})
    with pytest.raises(InvalidInputError):
        ExplicitDistribution(9, {tuple(range(9)): 1.0})


def test_sample_action_rejects_bad_gamma():
    rng = np.random.default_rng(0)
    for gamma in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(InvalidConfigError):
            sample_action([0.1, 0.2], gamma, rng)


def test_sample_action_tiny_gamma_never_explores():
    rng = np.random.default_rng(1)
    s = np.array([0.3, -1.0, 2.0])
    for _ in range(1000):
        played, explored = sample_action(s, 1e-12, rng)
        assert not explored
        assert played is s or np.array_equal(played, s)


def test_sample_action_explore_fraction():
    rng = np.random.default_rng(2)
    draws = [sample_action(np.zeros(3), 0.3, rng)[1] for _ in range(100_000)]
    assert abs(np.mean(draws) - 0.3) <= 0.01


def test_explored_draws_are_uniform_over_rankings():
    rng = np.random.default_rng(3)
    counts = {}
    n = 0
    while n < 100_000:
        scores, explored = sample_action(np.array([5.0, 1.0, 3.0]), 0.49, rng)
        if not explored:
            continue
        key = tuple(np.argsort(-scores, kind="stable"))
        counts[key] = counts.get(key, 0) + 1
        n += 1
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / n - 1 / 6) <= 0.01


def test_sample_action_is_reproducible():
    a = [sample_action(np.arange(4.0), 0.4, np.random.default_rng(9)) for _ in range(3)]
    for played, explored in a[1:]:
        np.testing.assert_array_equal(played, a[0][0])
        assert explored == a[0][1]


def test_extract_feedback_examples():
    sigma = Permutation.from_ranking([1, 0, 2])
    fb = extract_feedback([0, 1, 0], sigma, 1)
    assert list(fb.observed_grades) == [1]
    fb = extract_feedback([2, 0, 1], Permutation.identity(3), 2)
    assert list(fb.observed_grades) == [2, 0]
    R = np.array([3, 0, 2, 1])
    sigma = Permutation.from_ranking([2, 3, 0, 1])
    fb = extract_feedback(R, sigma, 4)
    np.testing.assert_array_equal(fb.observed_grades, R[[2, 3, 0, 1]])
    with pytest.raises(InvalidInputError):
        extract_feedback(R, sigma, 5)
