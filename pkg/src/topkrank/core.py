"""Ranking primitives: permutations, NDCG@k and L2-ball projection.

Document indices and ranks are 0-based in every array this module returns.
Rank ``i`` (0-based) carries the discount ``1 / log2(i + 2)``, which is the
usual ``1 / log2(rank + 1)`` for 1-based ranks.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import InvalidInputError

_LN2 = math.log(2.0)


def check_scores(s, name="scores"):
    """Return ``s`` as a finite 1-d float array."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return s


def check_relevance(R, m=None, max_grade=None):
    """Return ``R`` as a 1-d array of non-negative integer grades."""
    R = np.asarray(R)
    if R.ndim != 1 or R.size == 0:
        raise InvalidInputError(f"relevance must be a non-empty 1-d vector, got shape {R.shape}")
    if R.dtype.kind == "f":
        if not np.all(np.isfinite(R)) or np.any(R != np.round(R)):
            raise InvalidInputError("relevance grades must be integers")
    elif R.dtype.kind not in "iub":
        raise InvalidInputError(f"relevance grades must be integers, got dtype {R.dtype}")
    R = R.astype(np.int64)
    if np.any(R < 0):
        raise InvalidInputError("relevance grades must be non-negative")
    if max_grade is not None and np.any(R > max_grade):
        raise InvalidInputError(f"relevance grades must not exceed {max_grade}")
    if m is not None and R.size != m:
        raise InvalidInputError(f"relevance has length {R.size}, expected {m}")
    return R


def check_documents(X):
    """Return ``X`` as a finite ``(m, d)`` float matrix with ``m >= 1``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"document list must be an (m, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("document features contain non-finite entries")
    return X


@dataclass(frozen=True, eq=False)
class Permutation:
    """A ranking with both directions stored.

    ``rank_to_doc[i]`` is the document at rank ``i`` and ``doc_to_rank[j]`` the
    rank of document ``j``.
    """

    rank_to_doc: np.ndarray
    doc_to_rank: np.ndarray

    @classmethod
    def from_ranking(cls, rank_to_doc):
        order = np.asarray(rank_to_doc, dtype=np.intp)
        m = order.size
        if order.ndim != 1 or m == 0 or not np.array_equal(np.sort(order), np.arange(m)):
            raise InvalidInputError(f"{list(order)} is not a permutation of 0..{m - 1}")
        inverse = np.empty(m, dtype=np.intp)
        inverse[order] = np.arange(m)
        order.setflags(write=False)
        inverse.setflags(write=False)
        return cls(order, inverse)

    @classmethod
    def identity(cls, m):
        return cls.from_ranking(np.arange(m))

    @property
    def m(self):
        return self.rank_to_doc.size

    def as_tuple(self):
        return tuple(int(j) for j in self.rank_to_doc)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.rank_to_doc, other.rank_to_doc)

    def __hash__(self):
        return hash(self.as_tuple())

    def __repr__(self):
        return f"Permutation({list(self.as_tuple())})"


def _fast_permutation(order):
    # order comes from argsort, already a valid permutation
    inverse = np.empty(order.size, dtype=np.intp)
    inverse[order] = np.arange(order.size)
    return Permutation(order, inverse)


def argsort_desc(s):
    """Rank documents by descending score; ties go to the lower index."""
    s = check_scores(s)
    return _fast_permutation(np.argsort(-s, kind="stable"))


def gain(r):
    """Exponential gain ``2**r - 1``."""
    return np.exp2(np.asarray(r, dtype=float)) - 1.0


@lru_cache(maxsize=64)
def _discount_table(n):
    table = _LN2 / np.log(np.arange(2, n + 2, dtype=float))
    table.setflags(write=False)
    return table


def discounts(k):
    """Position discounts for the top ``k`` ranks."""
    return _discount_table(int(k))


def _check_cutoff(k, m):
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= m:
        raise InvalidInputError(f"cutoff k={k} must be an integer in [1, {m}]")
    return int(k)


def dcg_at_k(grades_in_rank_order, k):
    """DCG of grades already arranged by rank, truncated at ``k``."""
    g = np.asarray(grades_in_rank_order)
    k = _check_cutoff(k, g.size)
    return float(np.dot(gain(g[:k]), discounts(k)))


def z_k(R, k):
    """Ideal DCG@k: the DCG of the grades sorted in descending order."""
    R = check_relevance(R)
    k = _check_cutoff(k, R.size)
    return dcg_at_k(np.sort(R)[::-1], k)


def ndcg_at_k(s, R, k):
    """NDCG@k of the ranking induced by ``s``; 0.0 when no document is relevant."""
    s = check_scores(s)
    R = check_relevance(R, m=s.size)
    k = _check_cutoff(k, s.size)
    ideal = z_k(R, k)
    if ideal == 0.0:
        return 0.0
    order = argsort_desc(s).rank_to_doc
    return dcg_at_k(R[order], k) / ideal


def project_l2_ball(w, radius):
    """Scale ``w`` onto the Euclidean ball of the given radius if it lies outside."""
    if not radius > 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    w = np.asarray(w, dtype=float)
    norm = float(np.sqrt(np.dot(w, w)))
    if norm <= radius:
        return w.copy()
    return w * (radius / norm)
