"""Ranking surrogates, their score-space gradients and top-k gradient estimators.

Every partial-feedback surrogate splits its gradient as

    grad(s, R) = offset(s) + sum over l-tuples tau of h_tau(s, R_tau)

where ``l`` is the surrogate's feedback depth.  Observing the top ``k >= l``
grades of a random ranking, the estimator is

    offset(s) + sum_{tau inside S} h_tau / C(m - l, k - l)  /  P(top-k set == S)

with ``S`` the observed top-k set.  For ``k == l`` this is the usual
importance-weighted template; for ``k == m`` it returns the exact gradient.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import check_documents, check_relevance, check_scores, gain
from .exceptions import (
    DegenerateDistributionError,
    InvalidInputError,
    UnsupportedSurrogateError,
)


def _softmax(v):
    z = np.exp(v - v.max())
    return z / z.sum()


def _log_softmax(v):
    shifted = v - v.max()
    return shifted - np.log(np.exp(shifted).sum())


def _validate(s, R):
    s = check_scores(s)
    R = check_relevance(R, m=s.size)
    return s, R


@dataclass(frozen=True)
class GradientEstimate:
    score_grad: np.ndarray
    weight_grad: np.ndarray


class Surrogate:
    """Base class: a loss phi(s, R) on score vectors with its exact gradient."""

    name = None
    convex = True
    feedback_depth = None  # None means the full relevance vector is required

    def loss(self, s, R):
        s, R = _validate(s, R)
        return self._loss(s, R)

    def gradient(self, s, R):
        s, R = _validate(s, R)
        return self._gradient(s, R)

    def _loss(self, s, R):
        raise NotImplementedError

    def _gradient(self, s, R):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self):
        return hash((type(self), tuple(sorted(vars(self).items()))))


class PartialFeedbackSurrogate(Surrogate):
    """A surrogate whose gradient decomposes over ``feedback_depth`` grades at a time."""

    feedback_depth = 1

    def _offset(self, s):
        return np.zeros_like(s)

    def _partial_sum(self, s, docs, grades):
        """Sum of the decomposition terms over all tuples drawn from ``docs``."""
        raise NotImplementedError

    def estimate_score_gradient(self, s, feedback, dist):
        """Unbiased estimate of ``gradient(s, R)`` from top-k feedback under ``dist``."""
        s = check_scores(s)
        m = s.size
        if feedback.sampled_perm.m != m or dist.m != m:
            raise InvalidInputError("scores, feedback and distribution disagree on m")
        k, depth = feedback.k, self.feedback_depth
        if k < depth:
            raise InvalidInputError(
                f"{self.name} needs top-{depth} feedback, got top-{k}"
            )
        docs = feedback.top_docs
        if k == depth == 1:
            denom = dist.prefix_marginal((int(docs[0]),))
        else:
            denom = _top_set_marginal(dist, docs)
        if not denom > 0.0:
            raise DegenerateDistributionError(
                f"observed top-{k} set {tuple(int(d) for d in docs)} has zero probability"
            )
        terms = self._partial_sum(s, docs, feedback.observed_grades)
        if k > depth:
            terms = terms / math.comb(m - depth, k - depth)
        return self._offset(s) + terms / denom

    def estimate_gradient(self, X, s, feedback, dist):
        score_grad = self.estimate_score_gradient(s, feedback, dist)
        return GradientEstimate(score_grad, X.T @ score_grad)


def _top_set_marginal(dist, docs):
    """Probability that the top ``len(docs)`` ranks hold the set ``docs`` in any order."""
    fast = getattr(dist, "top_set_marginal", None)
    if fast is not None:
        return fast(docs)
    return math.fsum(dist.prefix_marginal(p) for p in itertools.permutations(int(d) for d in docs))


class Squared(PartialFeedbackSurrogate):
    """Pointwise squared loss ``||s - R||^2``."""

    name = "squared"

    def _loss(self, s, R):
        r = s - R
        return float(np.dot(r, r))

    def _gradient(self, s, R):
        return 2.0 * (s - R)

    def _offset(self, s):
        return 2.0 * s

    def _partial_sum(self, s, docs, grades):
        out = np.zeros_like(s)
        out[docs] = -2.0 * grades
        return out


class RankSvmHinge(PartialFeedbackSurrogate):
    """Pairwise hinge: sum over ``R_i > R_j`` of ``max(0, 1 + s_j - s_i)``.

    The gradient uses the strict indicator ``1 + s_j > s_i``, so at a kink the
    returned vector is the zero-side subgradient.
    """

    name = "ranksvm"
    feedback_depth = 2

    def _loss(self, s, R):
        better = R[:, None] > R[None, :]
        margins = np.maximum(0.0, 1.0 + s[None, :] - s[:, None])
        return float(margins[better].sum())

    @staticmethod
    def _active(s, R):
        return (R[:, None] > R[None, :]) & (1.0 + s[None, :] > s[:, None])

    def _gradient(self, s, R):
        A = self._active(s, R).astype(float)
        return A.sum(axis=0) - A.sum(axis=1)

    def _partial_sum(self, s, docs, grades):
        A = self._active(s[docs], grades).astype(float)
        out = np.zeros_like(s)
        np.add.at(out, docs, A.sum(axis=0) - A.sum(axis=1))
        return out


class KlListwise(PartialFeedbackSurrogate):
    """KL divergence between the un-normalized vectors ``exp(R)`` and ``exp(s)``.

    Exponents beyond ``max_exponent`` raise rather than overflow.
    """

    name = "kl"

    def __init__(self, max_exponent=50.0):
        self.max_exponent = float(max_exponent)

    def _check_range(self, *arrays):
        for a in arrays:
            if np.max(np.abs(a)) > self.max_exponent:
                raise InvalidInputError(
                    f"KL surrogate inputs must satisfy |x| <= {self.max_exponent}"
                )

    def loss(self, s, R):
        s, R = _validate(s, R)
        self._check_range(s, R)
        return self._loss(s, R)

    def gradient(self, s, R):
        s, R = _validate(s, R)
        self._check_range(s, R)
        return self._gradient(s, R)

    def _loss(self, s, R):
        eR = np.exp(R)
        return float(np.sum(eR * R - eR * s - eR + np.exp(s)))

    def _gradient(self, s, R):
        return np.exp(s) - np.exp(R)

    def _partial_sum(self, s, docs, grades):
        self._check_range(s, grades)
        out = np.zeros_like(s)
        out[docs] = np.exp(s[docs]) - np.exp(grades)
        return out


class SmoothDcg(PartialFeedbackSurrogate):
    """Softmax-smoothed DCG@1: ``sum_i G(R_i) softmax(s / epsilon)_i``.

    Non-convex; no regret guarantee applies.
    """

    name = "smoothdcg"
    convex = False

    def __init__(self, epsilon=0.01):
        if not epsilon > 0:
            raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
        self.epsilon = float(epsilon)

    def _loss(self, s, R):
        return float(np.dot(gain(R), _softmax(s / self.epsilon)))

    def _gradient(self, s, R):
        q = _softmax(s / self.epsilon)
        g = gain(R)
        return q * (g - np.dot(g, q)) / self.epsilon

    def _partial_sum(self, s, docs, grades):
        # h_i = G(R_i) q_i (e_i - q) / epsilon
        q = _softmax(s / self.epsilon)
        weights = gain(grades) * q[docs] / self.epsilon
        out = -weights.sum() * q
        np.add.at(out, docs, weights)
        return out

    def __repr__(self):
        return f"SmoothDcg(epsilon={self.epsilon})"


class ListNetCrossEntropy(Surrogate):
    """ListNet top-1 cross entropy between ``softmax(R)`` and ``softmax(s)``.

    Its gradient does not decompose over fewer than ``m`` grades, so it only
    serves the full-feedback baseline.
    """

    name = "listnet"
    feedback_depth = None

    def _loss(self, s, R):
        return float(-np.dot(_softmax(R.astype(float)), _log_softmax(s)))

    def _gradient(self, s, R):
        return _softmax(s) - _softmax(R.astype(float))


SURROGATES = {
    "squared": Squared,
    "ranksvm": RankSvmHinge,
    "kl": KlListwise,
    "smoothdcg": SmoothDcg,
    "listnet": ListNetCrossEntropy,
}


def get_surrogate(name, **params):
    """Build a surrogate by name (``squared``, ``ranksvm``, ``kl``, ``smoothdcg``, ``listnet``)."""
    if isinstance(name, Surrogate):
        return name
    try:
        cls = SURROGATES[name.lower()]
    except KeyError:
        raise UnsupportedSurrogateError(
            f"unknown surrogate {name!r}; choose from {sorted(SURROGATES)}"
        ) from None
    if cls is SmoothDcg:
        return cls(**{k: v for k, v in params.items() if k == "epsilon"})
    return cls()


def estimate_gradient(surrogate, X, s, feedback, dist):
    """Unbiased estimate of the weight-space gradient ``X^T grad_s phi(s, R)``."""
    if not isinstance(surrogate, PartialFeedbackSurrogate):
        raise TypeError(
            f"{surrogate!r} has no partial-feedback gradient estimator"
        )
    X = check_documents(X)
    if X.shape[0] != np.size(s):
        raise InvalidInputError("document list and score vector disagree on m")
    return surrogate.estimate_gradient(X, s, feedback, dist)


# --- decomposability witnesses ------------------------------------------------


@dataclass(frozen=True)
class DecomposabilityReport:
    surrogate: str
    k: int
    supported: bool
    max_mixed_difference: float
    witness: dict

    @property
    def verdict(self):
        return "supported" if self.supported else "refuted"


def _mixed_difference(F, base, coords):
    """Finite mixed difference of ``F`` over unit bumps in ``coords``."""
    total = 0.0
    n = len(coords)
    for r in range(n + 1):
        for subset in itertools.combinations(coords, r):
            R = base.copy()
            R[list(subset)] += 1
            total = total + (-1) ** (n - r) * F(R)
    return total


def _hinge_instance():
    # m = 3, s = (1, 0, 0): coefficient of e_1 in the terms of the RankSVM
    # gradient that involve R_1
    s = np.array([1.0, 0.0, 0.0])
    svm = RankSvmHinge()

    def coefficient(R):
        A = svm._active(s, np.asarray(R))
        return float(A[1:, 0].sum() - A[0, 1:].sum())

    first = coefficient((1, 0, 0)) - coefficient((0, 0, 0))
    second = coefficient((1, 1, 1)) - coefficient((0, 1, 1))
    return {"s": (1.0, 0.0, 0.0), "differences": (abs(first), abs(second))}


def decomposability_witness(surrogate, k, m=4, n_scores=5, seed=0):
    """Check whether ``grad_s phi(s, .)`` decomposes over ``k`` grades at a time.

    On the binary grid ``{0, 1}^m`` a function is a sum of terms touching at
    most ``k`` coordinates iff every mixed difference of order ``k + 1`` over
    distinct coordinates vanishes.  The check runs at a few score vectors and
    reports the largest such difference.
    """
    surrogate = get_surrogate(surrogate)
    if k not in (1, 2):
        raise InvalidInputError("decomposability is checked for k in {1, 2}")
    if m < k + 2:
        # gradients of shift-invariant losses can pass the test when m == k + 1
        raise InvalidInputError(f"need m >= {k + 2} documents to test depth {k}")
    rng = np.random.default_rng(seed)
    score_vectors = [np.r_[1.0, np.zeros(m - 1)]]
    score_vectors += [rng.normal(size=m) for _ in range(n_scores - 1)]
    worst = 0.0
    where = None
    for s in score_vectors:
        def F(R, s=s):
            return surrogate._gradient(s, R)

        for coords in itertools.combinations(range(m), k + 1):
            for bits in itertools.product((0, 1), repeat=m - k - 1):
                base = np.zeros(m, dtype=np.int64)
                rest = [i for i in range(m) if i not in coords]
                base[rest] = bits
                diff = float(np.max(np.abs(_mixed_difference(F, base, list(coords)))))
                if diff > worst:
                    worst, where = diff, {"s": tuple(s), "coords": coords, "base": tuple(base)}
    witness = {} if where is None else dict(where)
    if isinstance(surrogate, RankSvmHinge) and k == 1:
        witness["hinge_instance"] = _hinge_instance()
    return DecomposabilityReport(surrogate.name, k, worst <= 1e-9, worst, witness)
