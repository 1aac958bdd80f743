"""Online learning to rank from top-k feedback, plus full-feedback and random baselines."""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    _fast_permutation,
    argsort_desc,
    check_documents,
    check_relevance,
    dcg_at_k,
    discounts,
    gain,
    ndcg_at_k,
    project_l2_ball,
)
from .exceptions import DataError, InvalidConfigError, InvalidInputError
from .sampling import MixtureDistribution, _feedback_unchecked
from .surrogates import ListNetCrossEntropy, PartialFeedbackSurrogate, get_surrogate

MAX_DEFAULT_GAMMA = 0.49


def default_gamma(horizon):
    """Exploration rate ``T^(-1/3)``, kept inside (0, 1/2) for tiny horizons."""
    return min(horizon ** (-1.0 / 3.0), MAX_DEFAULT_GAMMA)


def default_eta(horizon):
    return horizon ** (-2.0 / 3.0)


def default_baseline_eta(horizon):
    return horizon ** (-0.5)


@dataclass
class LearnerConfig:
    """Hyperparameters of one online game.

    ``gamma`` and ``eta`` default to ``T^(-1/3)`` and ``T^(-2/3)``.  The
    feedback depth defaults to the surrogate's own depth.
    """

    surrogate: object = "squared"
    horizon: int = 1000
    gamma: Optional[float] = None
    eta: Optional[float] = None
    radius: float = 1.0
    seed: int = 0
    metric_cutoff: int = 10
    epsilon: float = 0.01
    feedback_depth: Optional[int] = None

    def __post_init__(self):
        self.surrogate = get_surrogate(self.surrogate, epsilon=self.epsilon)
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidConfigError(f"horizon must be a positive integer, got {self.horizon}")
        self.horizon = int(self.horizon)
        if self.gamma is not None and not 0.0 < self.gamma < 0.5:
            raise InvalidConfigError(f"gamma must lie in (0, 1/2), got {self.gamma}")
        if self.eta is not None and not self.eta >= 0.0:
            raise InvalidConfigError(f"eta must be non-negative, got {self.eta}")
        if not self.radius > 0:
            raise InvalidConfigError(f"radius must be positive, got {self.radius}")
        if self.metric_cutoff < 1:
            raise InvalidConfigError("metric_cutoff must be at least 1")

    @property
    def resolved_gamma(self):
        return default_gamma(self.horizon) if self.gamma is None else self.gamma

    @property
    def resolved_eta(self):
        return default_eta(self.horizon) if self.eta is None else self.eta

    @property
    def resolved_depth(self):
        if self.feedback_depth is not None:
            return int(self.feedback_depth)
        return self.surrogate.feedback_depth


class RoundRecord(NamedTuple):
    round: int
    loss: float
    ndcg: float
    explored: bool
    weight_norm: float


@dataclass
class GameTrajectory:
    """Per-round log of a game.  ``judged`` marks rounds with a relevant document."""

    losses: np.ndarray
    ndcg: np.ndarray
    explored: np.ndarray
    weight_norms: np.ndarray
    judged: np.ndarray
    final_weights: np.ndarray
    weight_history: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.losses.size

    @property
    def records(self):
        return [
            RoundRecord(t + 1, float(l), float(n), bool(e), float(w))
            for t, (l, n, e, w) in enumerate(
                zip(self.losses, self.ndcg, self.explored, self.weight_norms)
            )
        ]

    @property
    def cumulative_loss(self):
        return float(np.sum(self.losses))

    def running_ndcg(self):
        """Running mean of NDCG over judged rounds (0 until the first judged round)."""
        out = np.empty(self.ndcg.size)
        mean, count = 0.0, 0
        for t, (value, judged) in enumerate(zip(self.ndcg, self.judged)):
            if judged:
                count += 1
                mean += (value - mean) / count
            out[t] = mean
        return out

    @property
    def average_ndcg(self):
        return float(self.running_ndcg()[-1]) if len(self) else 0.0


@dataclass
class LearnerState:
    weights: np.ndarray
    rng: np.random.Generator


def initial_state(d, seed):
    return LearnerState(np.zeros(d), np.random.default_rng(seed))


def update_weights(weights, X, s_det, feedback, dist, surrogate, eta, radius):
    """One projected step on the estimated gradient.

    This is the only place weights change, and it sees the top-k feedback but
    never the full relevance vector.
    """
    score_grad = surrogate.estimate_score_gradient(s_det, feedback, dist)
    return project_l2_ball(weights - eta * (X.T @ score_grad), radius)


def _played_ndcg(R, order, cutoff):
    k = min(cutoff, R.size)
    ideal = dcg_at_k(np.sort(R)[::-1], k)
    if ideal == 0.0:
        return 0.0, False
    return float(np.dot(gain(R[order[:k]]), discounts(k))) / ideal, True


def _play(weights, rng, X, R, surrogate, gamma, eta, radius, depth, cutoff):
    s_det = X @ weights
    exploit = np.argsort(-s_det, kind="stable")
    if rng.random() < gamma:
        s_played = rng.random(s_det.size)
        order = np.argsort(-s_played, kind="stable")
        explored = True
    else:
        s_played, order, explored = s_det, exploit, False
    feedback = _feedback_unchecked(R, order, min(depth, R.size))
    dist = MixtureDistribution(_fast_permutation(exploit), gamma)
    new_weights = update_weights(weights, X, s_det, feedback, dist, surrogate, eta, radius)
    # evaluation against the full relevance vector, outside the update path
    loss = surrogate._loss(s_played, R)
    ndcg, judged = _played_ndcg(R, order, cutoff)
    return new_weights, loss, ndcg, explored, judged


def _check_pair(X, R, d=None):
    X = check_documents(X)
    R = check_relevance(R, m=X.shape[0])
    if d is not None and X.shape[1] != d:
        raise InvalidInputError(f"document list has {X.shape[1]} features, expected {d}")
    return X, R


def _check_partial(cfg):
    if not isinstance(cfg.surrogate, PartialFeedbackSurrogate):
        raise InvalidConfigError(
            f"{cfg.surrogate!r} cannot learn from top-k feedback; use run_baseline('full_listnet', ...)"
        )
    if cfg.resolved_depth < cfg.surrogate.feedback_depth:
        raise InvalidConfigError(
            f"{cfg.surrogate.name} needs feedback depth >= {cfg.surrogate.feedback_depth}"
        )


def rtopkf_round(state, X, R, cfg):
    """Play one round: score, sample, observe top-k, estimate, step, project."""
    _check_partial(cfg)
    X, R = _check_pair(X, R, d=state.weights.size)
    norm = float(np.linalg.norm(state.weights))
    if norm > cfg.radius * (1 + 1e-12):
        raise InvalidInputError(f"weights have norm {norm} outside the radius {cfg.radius}")
    w, loss, ndcg, explored, _ = _play(
        state.weights, state.rng, X, R, cfg.surrogate, cfg.resolved_gamma,
        cfg.resolved_eta, cfg.radius, cfg.resolved_depth, cfg.metric_cutoff,
    )
    record = RoundRecord(0, loss, ndcg, explored, float(np.linalg.norm(w)))
    return LearnerState(w, state.rng), record


def take_rounds(stream, horizon, cycle=True):
    """The first ``horizon`` (X, R) pairs of ``stream``, cycling sequences if allowed."""
    if hasattr(stream, "__len__") and hasattr(stream, "__getitem__"):
        n = len(stream)
        if n == 0:
            raise DataError("query stream is empty")
        if horizon > n and not cycle:
            raise DataError(f"stream has {n} queries but {horizon} rounds were requested")
        return [stream[t % n] for t in range(horizon)]
    out = []
    it = iter(stream)
    for _ in range(horizon):
        try:
            out.append(next(it))
        except StopIteration:
            raise DataError(f"query stream ran out after {len(out)} rounds") from None
    return out


def _run(step, cfg, stream, cycle, record_weights):
    rounds = take_rounds(stream, cfg.horizon, cycle)
    X0, _ = _check_pair(*rounds[0])
    d = X0.shape[1]
    state = initial_state(d, cfg.seed)
    T = cfg.horizon
    losses, ndcg, norms = np.empty(T), np.empty(T), np.empty(T)
    explored, judged = np.zeros(T, dtype=bool), np.zeros(T, dtype=bool)
    history = np.empty((T + 1, d)) if record_weights else None
    w = state.weights
    if record_weights:
        history[0] = w
    for t, (X, R) in enumerate(rounds):
        X, R = _check_pair(X, R, d=d)
        w, losses[t], ndcg[t], explored[t], judged[t] = step(w, state.rng, X, R)
        norms[t] = np.sqrt(np.dot(w, w))
        if record_weights:
            history[t + 1] = w
    return GameTrajectory(losses, ndcg, explored, norms, judged, w, history)


def run_game(cfg, stream, cycle=True, record_weights=False):
    """Play ``cfg.horizon`` rounds of the top-k feedback game from zero weights."""
    _check_partial(cfg)
    gamma, eta, depth = cfg.resolved_gamma, cfg.resolved_eta, cfg.resolved_depth

    def step(w, rng, X, R):
        return _play(w, rng, X, R, cfg.surrogate, gamma, eta, cfg.radius, depth, cfg.metric_cutoff)

    traj = _run(step, cfg, stream, cycle, record_weights)
    traj.meta.update(kind="rtopkf", surrogate=cfg.surrogate.name, gamma=gamma, eta=eta)
    return traj


BASELINES = ("full_listnet", "random_ranker")


def run_baseline(kind, cfg, stream, cycle=True, record_weights=False):
    """Run a comparison strategy under the same logging as :func:`run_game`.

    ``full_listnet`` does projected online gradient descent on the ListNet
    loss with the whole relevance vector (``eta`` defaults to ``T^(-1/2)``).
    ``random_ranker`` plays a fresh uniform score vector every round and logs
    ``cfg.surrogate``'s loss; all its rounds count as explored.
    """
    if kind == "full_listnet":
        listnet = ListNetCrossEntropy()
        eta = default_baseline_eta(cfg.horizon) if cfg.eta is None else cfg.eta

        def step(w, rng, X, R):
            s = X @ w
            w_next = project_l2_ball(w - eta * (X.T @ listnet._gradient(s, R)), cfg.radius)
            order = np.argsort(-s, kind="stable")
            ndcg, judged = _played_ndcg(R, order, cfg.metric_cutoff)
            return w_next, listnet._loss(s, R), ndcg, False, judged

        meta = dict(kind=kind, surrogate="listnet", eta=eta)
    elif kind == "random_ranker":
        def step(w, rng, X, R):
            s = rng.random(X.shape[0])
            order = np.argsort(-s, kind="stable")
            ndcg, judged = _played_ndcg(R, order, cfg.metric_cutoff)
            return w, cfg.surrogate._loss(s, R), ndcg, True, judged

        meta = dict(kind=kind, surrogate=cfg.surrogate.name)
    else:
        raise InvalidConfigError(f"unknown baseline {kind!r}; choose from {BASELINES}")
    traj = _run(step, cfg, stream, cycle, record_weights)
    traj.meta.update(meta)
    return traj


# --- estimator interface -------------------------------------------------------


def _check_queries(X, y=None):
    """Normalize a single query or a list of queries into lists of arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
        if y is not None:
            y = [y]
    X = [check_documents(x) for x in X]
    if not X:
        raise InvalidInputError("at least one query is required")
    d = X[0].shape[1]
    if any(x.shape[1] != d for x in X):
        raise InvalidInputError("all queries must share the same number of features")
    if y is None:
        return X, None
    if len(y) != len(X):
        raise InvalidInputError(f"{len(X)} document lists but {len(y)} relevance vectors")
    y = [check_relevance(r, m=x.shape[0]) for x, r in zip(X, y)]
    return X, y


class _RankerMixin:
    def decision_function(self, X):
        """Scores ``X w`` for one query (2-d array) or a list of queries."""
        check_is_fitted(self, "coef_")
        single = isinstance(X, np.ndarray) and X.ndim == 2
        queries, _ = _check_queries(X)
        for x in queries:
            if x.shape[1] != self.n_features_in_:
                raise InvalidInputError(
                    f"X has {x.shape[1]} features, but the ranker was fit with {self.n_features_in_}"
                )
        scores = [x @ self.coef_ for x in queries]
        return scores[0] if single else scores

    def predict(self, X):
        """Document indices in rank order for one query or a list of queries."""
        scores = self.decision_function(X)
        if isinstance(scores, np.ndarray):
            return argsort_desc(scores).rank_to_doc.copy()
        return [argsort_desc(s).rank_to_doc.copy() for s in scores]

    def score(self, X, y):
        """Mean NDCG@cutoff over queries with at least one relevant document."""
        queries, grades = _check_queries(X, y)
        values = []
        for x, r in zip(queries, grades):
            s = self.decision_function(x)
            if r.any():
                values.append(ndcg_at_k(s, r, min(self.metric_cutoff, r.size)))
        return float(np.mean(values)) if values else 0.0


class TopKRanker(_RankerMixin, BaseEstimator):
    """Linear ranker trained online from the grades of its top ``k`` documents.

    Parameters
    ----------
    surrogate : str or Surrogate
        One of ``squared``, ``ranksvm``, ``kl``, ``smoothdcg``.
    n_rounds : int, optional
        Horizon ``T``; defaults to the number of queries passed to ``fit``.
        Queries are cycled when ``n_rounds`` exceeds them.
    gamma, eta : float, optional
        Exploration and learning rates; default ``T^(-1/3)`` and ``T^(-2/3)``.
    radius : float
        Radius of the L2 ball the weights are projected onto.
    """

    def __init__(self, surrogate="squared", n_rounds=None, gamma=None, eta=None,
                 radius=1.0, epsilon=0.01, feedback_depth=None, metric_cutoff=10,
                 random_state=0):
        self.surrogate = surrogate
        self.n_rounds = n_rounds
        self.gamma = gamma
        self.eta = eta
        self.radius = radius
        self.epsilon = epsilon
        self.feedback_depth = feedback_depth
        self.metric_cutoff = metric_cutoff
        self.random_state = random_state

    def _config(self, n_queries):
        return LearnerConfig(
            surrogate=self.surrogate,
            horizon=self.n_rounds or n_queries,
            gamma=self.gamma,
            eta=self.eta,
            radius=self.radius,
            seed=self.random_state,
            metric_cutoff=self.metric_cutoff,
            epsilon=self.epsilon,
            feedback_depth=self.feedback_depth,
        )

    def fit(self, X, y):
        """Play the online game over the queries ``X`` with relevance ``y``."""
        queries, grades = _check_queries(X, y)
        cfg = self._config(len(queries))
        self.trajectory_ = run_game(cfg, list(zip(queries, grades)))
        self.coef_ = self.trajectory_.final_weights
        self.n_features_in_ = queries[0].shape[1]
        self.config_ = cfg
        self._state = None
        return self

    def partial_fit(self, X, y):
        """Play one round per query, continuing from the current weights."""
        queries, grades = _check_queries(X, y)
        if not hasattr(self, "config_") or getattr(self, "_state", None) is None:
            self.config_ = self._config(len(queries))
            self.n_features_in_ = queries[0].shape[1]
            weights = getattr(self, "coef_", None)
            state = initial_state(self.n_features_in_, self.random_state)
            if weights is not None:
                state.weights = weights.copy()
            self._state = state
        for x, r in zip(queries, grades):
            self._state, _ = rtopkf_round(self._state, x, r, self.config_)
        self.coef_ = self._state.weights
        return self


class FullFeedbackListNet(_RankerMixin, BaseEstimator):
    """Online ListNet baseline that sees every relevance grade."""

    def __init__(self, n_rounds=None, eta=None, radius=1.0, metric_cutoff=10):
        self.n_rounds = n_rounds
        self.eta = eta
        self.radius = radius
        self.metric_cutoff = metric_cutoff

    def fit(self, X, y):
        queries, grades = _check_queries(X, y)
        cfg = LearnerConfig("listnet", horizon=self.n_rounds or len(queries), eta=self.eta,
                            radius=self.radius, metric_cutoff=self.metric_cutoff)
        self.trajectory_ = run_baseline("full_listnet", cfg, list(zip(queries, grades)))
        self.coef_ = self.trajectory_.final_weights
        self.n_features_in_ = queries[0].shape[1]
        return self


class RandomRanker(BaseEstimator):
    """Baseline that ignores all feedback and ranks uniformly at random."""

    def __init__(self, metric_cutoff=10, random_state=0):
        self.metric_cutoff = metric_cutoff
        self.random_state = random_state

    def fit(self, X, y=None):
        queries, _ = _check_queries(X)
        self.n_features_in_ = queries[0].shape[1]
        self._rng = np.random.default_rng(self.random_state)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "n_features_in_")
        single = isinstance(X, np.ndarray) and X.ndim == 2
        queries, _ = _check_queries(X)
        scores = [self._rng.random(x.shape[0]) for x in queries]
        return scores[0] if single else scores

    def predict(self, X):
        scores = self.decision_function(X)
        if isinstance(scores, np.ndarray):
            return argsort_desc(scores).rank_to_doc.copy()
        return [argsort_desc(s).rank_to_doc.copy() for s in scores]
