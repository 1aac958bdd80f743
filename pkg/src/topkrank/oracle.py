"""Ground-truth checks: exact expectations over all rankings, finite differences,
the best fixed weight vector in hindsight, regret and second-moment audits."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Permutation, argsort_desc, check_relevance, check_scores, project_l2_ball
from .exceptions import InvalidInputError, UnsupportedSurrogateError
from .sampling import MAX_TABLE_SIZE, ExplicitDistribution, MixtureDistribution, extract_feedback
from .surrogates import KlListwise, RankSvmHinge, Squared, get_surrogate


def enumerate_expectation(dist, f):
    """``sum over rankings pi of P(pi) f(pi)``, summed in lexicographic order.

    ``f`` receives a :class:`Permutation` and returns a scalar or vector.
    """
    if dist.m > MAX_TABLE_SIZE:
        raise InvalidInputError(f"exact enumeration is limited to m <= {MAX_TABLE_SIZE}")
    probs, values = [], []
    for perm, p in dist.support():
        probs.append(p)
        if p:
            values.append(p * np.asarray(f(Permutation.from_ranking(perm)), dtype=float))
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-12:
        raise InvalidInputError(f"ranking probabilities sum to {total!r}, not 1")
    return np.sum(values, axis=0)


def expected_estimate(surrogate, s, R, dist, k=None):
    """Exact mean of the score-gradient estimator when the ranking is drawn from ``dist``."""
    surrogate = get_surrogate(surrogate)
    R = check_relevance(R)
    k = surrogate.feedback_depth if k is None else k

    def estimate(perm):
        return surrogate.estimate_score_gradient(s, extract_feedback(R, perm, k), dist)

    return enumerate_expectation(dist, estimate)


def finite_diff_gradient(surrogate, s, R, step=1e-6):
    """Central differences ``(phi(s + h e_i) - phi(s - h e_i)) / 2h`` per coordinate."""
    if not step > 0:
        raise InvalidInputError("step must be positive")
    surrogate = get_surrogate(surrogate)
    s = check_scores(s)
    out = np.empty(s.size)
    for i in range(s.size):
        up, down = s.copy(), s.copy()
        up[i] += step
        down[i] -= step
        out[i] = (surrogate.loss(up, R) - surrogate.loss(down, R)) / (2 * step)
    return out


# --- best fixed weight vector in hindsight -------------------------------------


class _BatchObjective:
    """``sum_t phi(X_t w, R_t)`` and a (sub)gradient, vectorized over all rounds."""

    def __init__(self, dataset, surrogate):
        if not dataset:
            raise InvalidInputError("dataset is empty")
        self.surrogate = surrogate
        Xs, Rs, offsets = [], [], [0]
        for X, R in dataset:
            X = np.asarray(X, dtype=float)
            Xs.append(X)
            Rs.append(check_relevance(R, m=X.shape[0]))
            offsets.append(offsets[-1] + X.shape[0])
        self.X = np.vstack(Xs)
        self.R = np.concatenate(Rs).astype(float)
        self.d = self.X.shape[1]
        if isinstance(surrogate, KlListwise):
            self.eR = np.exp(self.R)
            self.const = float(np.sum(self.eR * self.R - self.eR))
        if isinstance(surrogate, RankSvmHinge):
            hi, lo = [], []
            for start, stop in zip(offsets[:-1], offsets[1:]):
                r = self.R[start:stop]
                i, j = np.nonzero(r[:, None] > r[None, :])
                hi.append(i + start)
                lo.append(j + start)
            self.hi = np.concatenate(hi)
            self.lo = np.concatenate(lo)

    def value_and_grad(self, w):
        s = self.X @ w
        sur = self.surrogate
        if isinstance(sur, Squared):
            r = s - self.R
            return float(r @ r), self.X.T @ (2.0 * r)
        if isinstance(sur, KlListwise):
            es = np.exp(s)
            value = self.const - float(self.eR @ s) + float(es.sum())
            return value, self.X.T @ (es - self.eR)
        margins = 1.0 + s[self.lo] - s[self.hi]
        active = margins > 0
        g = np.zeros_like(s)
        np.add.at(g, self.lo[active], 1.0)
        np.add.at(g, self.hi[active], -1.0)
        return float(margins[active].sum()), self.X.T @ g

    def value(self, w):
        return self.value_and_grad(w)[0]


class HindsightSolution(NamedTuple):
    weights: np.ndarray
    loss: float
    n_sweeps: int
    certified: bool


def _smooth_descent(obj, w, radius, tol, max_sweeps):
    f, g = obj.value_and_grad(w)
    step = 1.0 / max(1e-12, float(np.linalg.norm(obj.X, ord=2)) ** 2)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        while True:
            w_new = project_l2_ball(w - step * g, radius)
            diff = w_new - w
            f_new, g_new = obj.value_and_grad(w_new)
            if f_new <= f + g @ diff + (diff @ diff) / (2 * step) + 1e-12 * abs(f):
                break
            step *= 0.5
        decrease = f - f_new
        w, f, g = w_new, f_new, g_new
        step *= 1.5
        if decrease < tol * max(1.0, abs(f)):
            break
    return w, f, sweeps


def _subgradient_descent(obj, w, radius, tol, max_sweeps, patience=500):
    best_w, best_f = w, obj.value(w)
    last_gain_sweep, reference = 0, best_f
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        f, g = obj.value_and_grad(w)
        if f < best_f:
            best_w, best_f = w, f
        if reference - best_f > tol * max(1.0, abs(best_f)):
            reference, last_gain_sweep = best_f, sweeps
        elif sweeps - last_gain_sweep >= patience:
            break
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            break
        w = project_l2_ball(w - (radius / math.sqrt(sweeps)) * g / norm, radius)
    return best_w, best_f, sweeps


def _certify(obj, w, f, radius, rng, n_checks=100, tol=1e-6):
    for _ in range(n_checks):
        direction = rng.normal(size=w.size)
        direction /= np.linalg.norm(direction)
        size = radius * 10.0 ** rng.uniform(-4, 0)
        candidate = project_l2_ball(w + size * direction, radius)
        if f - obj.value(candidate) > tol * max(1.0, abs(f)):
            return False
    return True


def best_in_hindsight(dataset, surrogate, radius, init=None, tol=1e-12, max_sweeps=100_000, seed=0):
    """Minimize ``sum_t phi(X_t w, R_t)`` over ``||w|| <= radius``.

    Smooth surrogates use projected gradient descent with backtracking; the
    hinge uses projected subgradient steps ``radius / sqrt(sweep)`` and keeps
    the best iterate.  The result is checked against 100 random feasible
    perturbations.
    """
    surrogate = get_surrogate(surrogate)
    if not isinstance(surrogate, (Squared, KlListwise, RankSvmHinge)):
        raise UnsupportedSurrogateError(
            f"best-in-hindsight needs a convex surrogate, got {surrogate.name}"
        )
    if not radius > 0:
        raise InvalidInputError("radius must be positive")
    obj = _BatchObjective(list(dataset), surrogate)
    w0 = np.zeros(obj.d) if init is None else project_l2_ball(np.asarray(init, float), radius)
    if isinstance(surrogate, RankSvmHinge):
        w, f, sweeps = _subgradient_descent(obj, w0, radius, max(tol, 1e-8), max_sweeps)
    else:
        w, f, sweeps = _smooth_descent(obj, w0, radius, tol, max_sweeps)
    certified = _certify(obj, w, f, radius, np.random.default_rng(seed))
    return HindsightSolution(w, f, sweeps, certified)


@dataclass(frozen=True)
class RegretReport:
    horizon: int
    learner_loss: float
    hindsight_loss: float
    regret: float
    regret_per_round: float
    regret_per_t23: float
    hindsight_weights: np.ndarray = None


def regret_from_losses(learner_loss, hindsight_loss, horizon, weights=None):
    regret = learner_loss - hindsight_loss
    return RegretReport(horizon, learner_loss, hindsight_loss, regret,
                        regret / horizon, regret / horizon ** (2.0 / 3.0), weights)


def regret_report(trajectory, dataset, surrogate, radius, hindsight=None):
    """Cumulative loss of the played scores minus the best fixed weights' loss.

    Negative regret is reported as is.
    """
    dataset = list(dataset)
    if len(dataset) != len(trajectory):
        raise InvalidInputError(
            f"trajectory has {len(trajectory)} rounds but the dataset has {len(dataset)}"
        )
    if hindsight is None:
        hindsight = best_in_hindsight(dataset, surrogate, radius)
    return regret_from_losses(trajectory.cumulative_loss, hindsight.loss, len(dataset),
                              hindsight.weights)


# --- estimator second moments --------------------------------------------------


def variance_constant(surrogate, m, doc_radius, radius, max_grade):
    """Polynomial constant ``C`` in the bound ``E||z||^2 <= C / gamma``."""
    surrogate = get_surrogate(surrogate)
    if isinstance(surrogate, Squared):
        return m**4 * doc_radius**4 * radius**2 * max_grade**2
    if isinstance(surrogate, RankSvmHinge):
        # 4 R_D^2 * (m^2 / 2 pairs) * (m^2 / (2 gamma)) <= 16 m^4 R_D^2 / gamma
        return 16 * m**4 * doc_radius**2
    if isinstance(surrogate, KlListwise):
        return m**2 * doc_radius**2 * math.exp(2 * doc_radius * radius)
    raise UnsupportedSurrogateError(f"no second-moment constant for {surrogate.name}")


@dataclass(frozen=True)
class VarianceBound:
    surrogate: str
    constant: float
    gamma: float
    bound: float
    measured: float
    measurements: np.ndarray

    @property
    def violations(self):
        return int(np.sum(self.measurements > self.bound))


def _sample_ball(rng, shape, radius):
    v = rng.normal(size=shape)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return v * radius * rng.random(shape[:-1] + (1,)) ** (1.0 / shape[-1])


def second_moment(surrogate, X, w, R, gamma):
    """Exact ``E||X^T z||^2`` under the exploration law built from ``X w``."""
    s = X @ w
    exploit = argsort_desc(s)
    if gamma >= 1.0:
        dist = ExplicitDistribution.uniform(X.shape[0])
    else:
        dist = MixtureDistribution(exploit, gamma)
    k = surrogate.feedback_depth

    def squared_norm(perm):
        z = X.T @ surrogate.estimate_score_gradient(s, extract_feedback(R, perm, k), dist)
        return float(z @ z)

    return float(enumerate_expectation(dist, squared_norm))


def variance_audit(surrogate, m, gamma, trials=50, d=3, doc_radius=1.0, radius=4.0,
                   max_grade=4, seed=0):
    """Exact second moments over random ``(X, w, R)`` compared with ``C / gamma``.

    ``gamma == 1`` audits the uniform law.  Defaults keep ``doc_radius *
    radius >= max_grade``, the regime in which the constants are derived.
    """
    surrogate = get_surrogate(surrogate)
    if not isinstance(surrogate, (Squared, KlListwise, RankSvmHinge)):
        raise UnsupportedSurrogateError(f"no variance audit for {surrogate.name}")
    if not 2 <= m <= 4:
        raise InvalidInputError("the audit enumerates rankings exactly and needs 2 <= m <= 4")
    if not 0.0 < gamma <= 1.0:
        raise InvalidInputError(f"gamma must lie in (0, 1], got {gamma}")
    rng = np.random.default_rng(seed)
    constant = variance_constant(surrogate, m, doc_radius, radius, max_grade)
    measurements = np.empty(trials)
    for t in range(trials):
        X = _sample_ball(rng, (m, d), doc_radius)
        w = _sample_ball(rng, (d,), radius)
        R = rng.integers(0, max_grade + 1, size=m)
        measurements[t] = second_moment(surrogate, X, w, R, gamma)
    return VarianceBound(surrogate.name, constant, gamma, constant / gamma,
                         float(measurements.max()), measurements)
