"""Exploration law over rankings, prefix marginals and top-k feedback."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Permutation, _fast_permutation, check_relevance, check_scores
from .exceptions import InvalidConfigError, InvalidInputError

MAX_TABLE_SIZE = 8


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise InvalidConfigError(f"gamma must lie in (0, 1), got {gamma}")
    return float(gamma)


def _check_prefix(prefix, m):
    prefix = tuple(int(j) for j in prefix)
    if len(prefix) == 0 or len(prefix) > m:
        raise InvalidInputError(f"prefix length must be in [1, {m}], got {len(prefix)}")
    if len(set(prefix)) != len(prefix):
        raise InvalidInputError(f"prefix {prefix} has duplicate documents")
    if min(prefix) < 0 or max(prefix) >= m:
        raise InvalidInputError(f"prefix {prefix} has documents outside 0..{m - 1}")
    return prefix


class PermutationDistribution:
    """A probability law over the ``m!`` rankings of ``m`` documents."""

    m: int

    def probability(self, perm):
        raise NotImplementedError

    def prefix_marginal(self, prefix):
        raise NotImplementedError

    def support(self):
        """Yield ``(rank_to_doc tuple, probability)`` in lexicographic order."""
        if self.m > MAX_TABLE_SIZE:
            raise InvalidInputError(f"enumeration is limited to m <= {MAX_TABLE_SIZE}")
        for perm in itertools.permutations(range(self.m)):
            yield perm, self.probability(perm)


class MixtureDistribution(PermutationDistribution):
    """Play ``exploit`` with probability ``1 - gamma``, else a uniform ranking.

    Each ranking ``pi`` gets mass ``(1 - gamma) [pi == exploit] + gamma / m!``.
    """

    def __init__(self, exploit, gamma):
        if not isinstance(exploit, Permutation):
            exploit = Permutation.from_ranking(exploit)
        self.exploit = exploit
        self.gamma = _check_gamma(gamma)
        self.m = exploit.m

    def probability(self, perm):
        perm = tuple(perm)
        hit = perm == self.exploit.as_tuple()
        return (1.0 - self.gamma) * hit + self.gamma / math.factorial(self.m)

    def prefix_marginal(self, prefix):
        prefix = _check_prefix(prefix, self.m)
        k = len(prefix)
        top = self.exploit.rank_to_doc
        hit = all(top[i] == j for i, j in enumerate(prefix))
        # (m - k)! / m! without forming factorials
        uniform = 1.0 / math.perm(self.m, k)
        return (1.0 - self.gamma) * hit + self.gamma * uniform

    def top_set_marginal(self, docs):
        """Probability that the top ``len(docs)`` ranks hold ``docs`` in any order."""
        docs = _check_prefix(docs, self.m)
        k = len(docs)
        hit = set(docs) == set(int(j) for j in self.exploit.rank_to_doc[:k])
        return (1.0 - self.gamma) * hit + self.gamma / math.comb(self.m, k)

    def to_table(self):
        return ExplicitDistribution.from_support(self.m, self.support())

    def __repr__(self):
        return f"MixtureDistribution(exploit={list(self.exploit.as_tuple())}, gamma={self.gamma})"


class ExplicitDistribution(PermutationDistribution):
    """A full probability table over all rankings; meant for small ``m`` only."""

    def __init__(self, m, table):
        if not 1 <= m <= MAX_TABLE_SIZE:
            raise InvalidInputError(f"explicit tables are limited to 1 <= m <= {MAX_TABLE_SIZE}")
        self.m = int(m)
        clean = {}
        for perm, prob in table.items():
            perm = tuple(int(j) for j in perm)
            if sorted(perm) != list(range(self.m)):
                raise InvalidInputError(f"{perm} is not a permutation of 0..{self.m - 1}")
            if prob < 0:
                raise InvalidInputError(f"negative probability {prob} for {perm}")
            if prob > 0:
                clean[perm] = clean.get(perm, 0.0) + float(prob)
        total = math.fsum(clean.values())
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")
        self._table = clean

    @classmethod
    def from_support(cls, m, pairs):
        return cls(m, dict(pairs))

    @classmethod
    def uniform(cls, m):
        p = 1.0 / math.factorial(m)
        return cls(m, {perm: p for perm in itertools.permutations(range(m))})

    @classmethod
    def point_mass(cls, perm):
        perm = tuple(int(j) for j in perm)
        return cls(len(perm), {perm: 1.0})

    def probability(self, perm):
        return self._table.get(tuple(int(j) for j in perm), 0.0)

    def prefix_marginal(self, prefix):
        prefix = _check_prefix(prefix, self.m)
        k = len(prefix)
        return math.fsum(p for perm, p in self._table.items() if perm[:k] == prefix)


def prefix_marginal(dist, prefix):
    """Probability that the top ``len(prefix)`` ranks hold exactly ``prefix`` in order."""
    return dist.prefix_marginal(prefix)


def pair_marginal_sum(dist, i, j):
    """``p(i, j) + p(j, i)``: probability that ``{i, j}`` fills the top two ranks."""
    if i == j:
        raise InvalidInputError("pair marginal needs two distinct documents")
    return dist.prefix_marginal((i, j)) + dist.prefix_marginal((j, i))


def sample_action(s_det, gamma, rng):
    """Draw the played score vector: ``s_det`` w.p. ``1 - gamma``, else uniform on [0, 1]^m.

    Returns ``(scores, explored)``.  The coin is drawn first and the uniform
    scores only on exploration, so the random stream is reproducible.
    """
    gamma = _check_gamma(gamma)
    s_det = check_scores(s_det)
    if rng.random() < gamma:
        return rng.random(s_det.size), True
    return s_det, False


@dataclass(frozen=True, eq=False)
class TopKFeedback:
    """What the learner sees after playing a ranking: the grades of its top ``k`` documents."""

    sampled_perm: Permutation
    k: int
    observed_grades: np.ndarray

    @property
    def top_docs(self):
        return self.sampled_perm.rank_to_doc[: self.k]


def extract_feedback(R, sigma, k):
    """Reveal ``R`` at the top ``k`` documents of ``sigma`` and nothing else."""
    R = check_relevance(R, m=sigma.m)
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= sigma.m:
        raise InvalidInputError(f"feedback depth k={k} must be in [1, {sigma.m}]")
    k = int(k)
    observed = R[sigma.rank_to_doc[:k]].copy()
    observed.setflags(write=False)
    return TopKFeedback(sigma, k, observed)


def _feedback_unchecked(R, order, k):
    # learner hot path: R is validated once per round, order comes from argsort
    observed = R[order[:k]]
    observed.setflags(write=False)
    return TopKFeedback(_fast_permutation(order), k, observed)
