"""Query streams: LETOR-format files and seeded synthetic adversaries."""

import io
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DataError, InvalidInputError, ParseError

logger = logging.getLogger(__name__)

_QID = re.compile(r"^qid:(\S+)$")


@dataclass
class Query:
    """One document list with its relevance grades."""

    qid: str
    features: np.ndarray
    grades: np.ndarray

    @property
    def m(self):
        return self.features.shape[0]

    def __iter__(self):
        # unpacks as (X, R)
        yield self.features
        yield self.grades


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline=None)
    return source


def parse_letor(source):
    """Parse ``<grade> qid:<id> <fid>:<val> ... [# comment]`` lines into queries.

    ``source`` is a path or an open text stream.  Queries keep file order and
    missing feature ids are zero; the feature count is the largest id seen.
    """
    stream = _open_text(source)
    close = stream is not source
    rows = {}
    order = []
    max_fid = 0
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 2:
                raise ParseError("expected a grade and a qid", lineno)
            try:
                grade = int(tokens[0])
            except ValueError:
                raise ParseError(f"grade {tokens[0]!r} is not an integer", lineno) from None
            if grade < 0:
                raise ParseError(f"grade {grade} is negative", lineno)
            match = _QID.match(tokens[1])
            if match is None:
                raise ParseError(f"expected qid:<id>, got {tokens[1]!r}", lineno)
            qid = match.group(1)
            feats = {}
            for tok in tokens[2:]:
                fid, sep, val = tok.partition(":")
                try:
                    fid_int = int(fid)
                    value = float(val)
                except ValueError:
                    raise ParseError(f"malformed feature {tok!r}", lineno) from None
                if not sep or fid_int < 1:
                    raise ParseError(f"malformed feature {tok!r}", lineno)
                if not np.isfinite(value):
                    raise ParseError(f"feature {tok!r} is not finite", lineno)
                feats[fid_int] = value
                max_fid = max(max_fid, fid_int)
            if qid not in rows:
                rows[qid] = []
                order.append(qid)
            rows[qid].append((grade, feats))
    finally:
        if close:
            stream.close()
    corpus = []
    for qid in order:
        docs = rows[qid]
        X = np.zeros((len(docs), max_fid))
        for i, (_, feats) in enumerate(docs):
            for fid, value in feats.items():
                X[i, fid - 1] = value
        R = np.array([g for g, _ in docs], dtype=np.int64)
        corpus.append(Query(qid, X, R))
    return corpus


def parse_letor_text(text):
    return parse_letor(io.StringIO(text, newline=None))


def _format_value(v):
    return repr(float(v))


def serialize_letor(corpus):
    """Canonical text: grade first, sorted feature ids, zero features omitted."""
    lines = []
    for q in corpus:
        for row, grade in zip(q.features, q.grades):
            feats = " ".join(
                f"{j + 1}:{_format_value(v)}" for j, v in enumerate(row) if v != 0.0
            )
            lines.append(f"{int(grade)} qid:{q.qid}" + (f" {feats}" if feats else ""))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class NormalizationStats:
    n_rows: int = 0
    n_scaled: int = 0
    max_norm_before: float = 0.0


def normalize_features(corpus, radius):
    """Scale any document row with L2 norm above ``radius`` onto that sphere."""
    if not radius > 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    stats = NormalizationStats()
    out = []
    for q in corpus:
        X = np.array(q.features, dtype=float)
        norms = np.linalg.norm(X, axis=1)
        over = norms > radius
        X[over] *= (radius / norms[over])[:, None]
        stats.n_rows += X.shape[0]
        stats.n_scaled += int(over.sum())
        if norms.size:
            stats.max_norm_before = max(stats.max_norm_before, float(norms.max()))
        out.append(Query(q.qid, X, q.grades))
    return out, stats


def prepare_corpus(corpus, radius=1.0, max_grade=None, max_docs=100):
    """Drop empty queries, truncate long ones, clip grades and normalize rows."""
    kept = []
    for q in corpus:
        if q.m == 0:
            logger.warning("dropping query %s with no documents", q.qid)
            continue
        if q.m == 1:
            logger.info("query %s has a single document", q.qid)
        X, R = q.features, q.grades
        if max_docs is not None and q.m > max_docs:
            X, R = X[:max_docs], R[:max_docs]
        if max_grade is not None and np.any(R > max_grade):
            logger.warning("clipping grades above %d in query %s", max_grade, q.qid)
            R = np.minimum(R, max_grade)
        kept.append(Query(q.qid, X, R))
    kept, stats = normalize_features(kept, radius)
    return kept, stats


class QueryStream:
    """Iterate a corpus as (X, R) pairs, optionally cycling and reshuffling.

    With ``shuffle`` on, each pass uses the next permutation drawn from a
    generator seeded with ``seed``.
    """

    def __init__(self, corpus, cycle=True, shuffle=False, seed=0):
        if not corpus:
            raise DataError("corpus is empty")
        self.corpus = list(corpus)
        self.cycle = cycle
        self.shuffle = shuffle
        self.seed = seed

    def __iter__(self):
        rng = np.random.default_rng(self.seed)
        n = len(self.corpus)
        while True:
            order = rng.permutation(n) if self.shuffle else range(n)
            for i in order:
                q = self.corpus[i]
                yield q.features, q.grades
            if not self.cycle:
                return


@dataclass
class SyntheticSpec:
    """A planted linear ranking problem.

    Document rows are uniform in the ball of radius ``doc_radius``; a grade is
    the equal-width bin of ``<row, w_true>`` over ``[-doc_radius |w_true|,
    doc_radius |w_true|]``, replaced by a uniform grade with probability
    ``noise``.
    """

    m: int = 10
    d: int = 5
    noise: float = 0.1
    max_grade: int = 4
    doc_radius: float = 1.0
    seed: int = 0
    w_true: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise InvalidInputError("synthetic queries need m >= 2")
        if not 0.0 <= self.noise < 0.5:
            raise InvalidInputError(f"noise must lie in [0, 0.5), got {self.noise}")
        if self.max_grade < 1:
            raise InvalidInputError("max_grade must be at least 1")
        if self.w_true is None:
            v = np.random.default_rng([self.seed, 1]).normal(size=self.d)
            self.w_true = v / np.linalg.norm(v)
        else:
            self.w_true = np.asarray(self.w_true, dtype=float)
            if self.w_true.shape != (self.d,):
                raise InvalidInputError(f"w_true must have shape ({self.d},)")


def quantize_grades(inner, spec):
    """Map inner products to grades with equal-width bins over the reachable range."""
    top = spec.doc_radius * float(np.linalg.norm(spec.w_true))
    if top == 0.0:
        return np.zeros(np.shape(inner), dtype=np.int64)
    levels = spec.max_grade + 1
    bins = np.floor((np.asarray(inner) + top) / (2 * top) * levels).astype(np.int64)
    return np.clip(bins, 0, spec.max_grade)


def _ball_rows(rng, n, d, radius):
    directions = rng.normal(size=(n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / d)
    return directions * radii[:, None]


class SyntheticStream:
    """Endless seeded stream of planted queries; ``take(T)`` returns a list."""

    def __init__(self, spec):
        self.spec = spec

    def _generate(self, rng):
        spec = self.spec
        X = _ball_rows(rng, spec.m, spec.d, spec.doc_radius)
        R = quantize_grades(X @ spec.w_true, spec)
        flip = rng.random(spec.m) < spec.noise
        if flip.any():
            R[flip] = rng.integers(0, spec.max_grade + 1, size=int(flip.sum()))
        return X, R

    def __iter__(self):
        rng = np.random.default_rng([self.spec.seed, 2])
        while True:
            yield self._generate(rng)

    def take(self, n):
        it = iter(self)
        return [next(it) for _ in range(n)]


def synthetic_stream(spec):
    return SyntheticStream(spec)
