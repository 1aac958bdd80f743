"""Two top-1-indistinguishable relevance laws with different NDCG-optimal rankings.

With top-1 feedback the learner only ever learns the per-document relevance
marginals ``E[R]``.  An NDCG-calibrated surrogate must rank by
``E[G(R) / Z_m(R)]``.  A pair of laws that agree on the first but order the
second differently therefore forces linear regret on every learner.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import gain, z_k
from .exceptions import InvalidInputError, ParseError

MAX_M = 10


class DegenerateSupportWarning(UserWarning):
    """The all-zero relevance vector carries positive probability."""


@dataclass(frozen=True, eq=False)
class RelevanceDistribution:
    """A law over binary relevance vectors; ``support[i]`` has probability ``probs[i]``."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if support.ndim != 2 or support.shape[0] != probs.size:
            raise InvalidInputError("support must be (n, m) with one probability per row")
        m = support.shape[1]
        if not 1 <= m <= MAX_M:
            raise InvalidInputError(f"m must lie in [1, {MAX_M}], got {m}")
        if np.any((support != 0) & (support != 1)):
            raise InvalidInputError("support vectors must be binary")
        if np.any(probs < 0):
            raise InvalidInputError("probabilities must be non-negative")
        total = math.fsum(probs)
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @property
    def m(self):
        return self.support.shape[1]

    @classmethod
    def point_mass(cls, bits):
        return cls(np.array([bits]), np.array([1.0]))

    @classmethod
    def uniform(cls, m):
        support = np.array(list(itertools.product((0, 1), repeat=m)))
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def relabel(self, order):
        """Rename documents so that new document ``i`` is old document ``order[i]``."""
        return RelevanceDistribution(self.support[:, list(order)], self.probs)


def expected_relevance(dist):
    """Per-document marginal ``E[R]``."""
    return np.array([
        math.fsum(p * row[i] for row, p in zip(dist.support, dist.probs))
        for i in range(dist.m)
    ])


def calibrated_score(dist):
    """``E[G(R) / Z_m(R)]``; the all-zero vector contributes nothing."""
    out = np.zeros(dist.m)
    for row, p in zip(dist.support, dist.probs):
        if p == 0.0:
            continue
        ideal = z_k(row, dist.m)
        if ideal == 0.0:
            warnings.warn(
                "the all-zero relevance vector has positive probability; it contributes "
                "zero to the calibrated score",
                DegenerateSupportWarning,
                stacklevel=2,
            )
            continue
        out += p * gain(row) / ideal
    return out


def top1_feedback_law(dist, s):
    """Probability that the top-scored document under ``s`` is relevant."""
    top = int(np.argsort(-np.asarray(s, dtype=float), kind="stable")[0])
    return math.fsum(p * row[top] for row, p in zip(dist.support, dist.probs))


def tie_classes(v, tol=1e-12):
    """Group coordinates of ``v`` into blocks of (near-)equal values, largest first."""
    order = np.argsort(-v, kind="stable")
    classes, current = [], [int(order[0])]
    for j in order[1:]:
        if abs(v[current[-1]] - v[j]) <= tol:
            current.append(int(j))
        else:
            classes.append(frozenset(current))
            current = [int(j)]
    classes.append(frozenset(current))
    return classes


def consistent_rankings(v, tol=1e-12):
    """Every descending ranking of ``v`` (1-based), breaking ties in all possible ways."""
    blocks = [sorted(c) for c in tie_classes(v, tol)]
    out = []
    for parts in itertools.product(*(itertools.permutations(b) for b in blocks)):
        out.append(tuple(j + 1 for part in parts for j in part))
    return out


@dataclass
class CounterexampleReport:
    marginals_p: np.ndarray
    marginals_q: np.ndarray
    calibrated_p: np.ndarray
    calibrated_q: np.ndarray
    rankings_p: list
    rankings_q: list
    indistinguishable: bool
    ordering_status: str
    warnings: list = field(default_factory=list)

    @property
    def orderings_differ(self):
        return self.ordering_status == "differ"

    @property
    def verdict(self):
        return self.indistinguishable and self.orderings_differ

    def lines(self):
        fmt = lambda v: "(" + ", ".join(f"{x:.4f}" for x in v) + ")"
        return [
            f"E_p[R]            = {fmt(self.marginals_p)}",
            f"E_q[R]            = {fmt(self.marginals_q)}",
            f"E_p[G(R)/Z(R)]    = {fmt(self.calibrated_p)}",
            f"E_q[G(R)/Z(R)]    = {fmt(self.calibrated_q)}",
            f"rankings under p  = {[list(r) for r in self.rankings_p]}",
            f"rankings under q  = {[list(r) for r in self.rankings_q]}",
            f"indistinguishable = {self.indistinguishable}",
            f"orderings         = {self.ordering_status}",
            f"verdict           = {self.verdict}",
        ]


def verify_counterexample(p, q, tol=1e-9):
    """Check that ``p`` and ``q`` share relevance marginals but not optimal rankings.

    Orderings "differ" when no ranking is optimal for both, "identical" when the
    optimal sets coincide, and "ambiguous" when they merely overlap through ties.
    """
    if p.m != q.m:
        raise InvalidInputError(f"distributions disagree on m: {p.m} vs {q.m}")
    mp, mq = expected_relevance(p), expected_relevance(q)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateSupportWarning)
        cp, cq = calibrated_score(p), calibrated_score(q)
    rp, rq = consistent_rankings(cp), consistent_rankings(cq)
    if set(rp) == set(rq):
        status = "identical"
    elif set(rp) & set(rq):
        status = "ambiguous"
    else:
        status = "differ"
    return CounterexampleReport(
        mp, mq, cp, cq, rp, rq,
        indistinguishable=bool(np.max(np.abs(mp - mq)) <= tol),
        ordering_status=status,
        warnings=[str(w.message) for w in caught],
    )


def load_counterexample(source=None):
    """Read a ``m=<int>`` header and ``bits p q`` lines; defaults to the bundled pair."""
    if source is None:
        text = resources.files("topkrank.fixtures").joinpath("top1_counterexample.txt").read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    m = None
    bits, ps, qs = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("m="):
            m = int(line[2:])
            continue
        parts = line.split()
        if m is None or len(parts) != 3 or len(parts[0]) != m or set(parts[0]) - {"0", "1"}:
            raise ParseError(f"expected '<{m} bits> p q', got {line!r}", lineno)
        bits.append([int(c) for c in parts[0]])
        ps.append(float(parts[1]))
        qs.append(float(parts[2]))
    if m is None:
        raise ParseError("missing m=<int> header")
    support = np.array(bits)
    return RelevanceDistribution(support, ps), RelevanceDistribution(support, qs)


def write_counterexample(p, q, path):
    if not np.array_equal(p.support, q.support):
        raise InvalidInputError("both distributions must share the same support order")
    lines = [f"m={p.m}"]
    for row, a, b in zip(p.support, p.probs, q.probs):
        lines.append(f"{''.join(str(int(x)) for x in row)} {float(a)!r} {float(b)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
