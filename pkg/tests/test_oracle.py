import numpy as np
import pytest

from topkrank.data import SyntheticSpec, synthetic_stream
from topkrank.exceptions import InvalidInputError, UnsupportedSurrogateError
from topkrank.learner import LearnerConfig, LearnerState, rtopkf_round, run_game
from topkrank.oracle import (
    best_in_hindsight,
    enumerate_expectation,
    expected_estimate,
    finite_diff_gradient,
    regret_report,
    second_moment,
    variance_audit,
    variance_constant,
)
from topkrank.sampling import ExplicitDistribution, MixtureDistribution
from topkrank.surrogates import SmoothDcg, Squared


def test_enumeration_point_mass():
    dist = ExplicitDistribution.point_mass((2, 0, 1))
    value = enumerate_expectation(dist, lambda p: np.asarray(p.rank_to_doc, float))
    np.testing.assert_array_equal(value, [2, 0, 1])


def test_enumeration_uniform_top_indicator():
    for m in (2, 3, 4, 5):
        dist = ExplicitDistribution.uniform(m)
        for j in range(m):
            value = enumerate_expectation(dist, lambda p: float(p.rank_to_doc[0] == j))
            assert value == pytest.approx(1 / m, abs=1e-15)


def test_enumeration_of_squared_estimator(rng):
    for _ in range(10):
        m = int(rng.integers(2, 6))
        s, R = rng.normal(size=m), rng.integers(0, 5, m)
        dist = MixtureDistribution(rng.permutation(m), float(rng.uniform(0.01, 0.5)))
        np.testing.assert_allclose(expected_estimate(Squared(), s, R, dist), 2 * (s - R), atol=1e-9)


def test_enumeration_refuses_large_m():
    with pytest.raises(InvalidInputError):
        enumerate_expectation(MixtureDistribution(np.arange(9), 0.1), lambda p: 0.0)


def test_finite_differences(rng):
    s, R = rng.normal(size=5), rng.integers(0, 4, 5)
    np.testing.assert_allclose(finite_diff_gradient("squared", s, R), 2 * (s - R), atol=1e-5)
    Rk = np.array([1, 0, 2])
    np.testing.assert_allclose(finite_diff_gradient("kl", Rk.astype(float), Rk), 0.0, atol=1e-7)
    sd = SmoothDcg(0.5)
    np.testing.assert_allclose(finite_diff_gradient(sd, s, R), sd.gradient(s, R), rtol=1e-5, atol=1e-8)
    with pytest.raises(InvalidInputError):
        finite_diff_gradient("squared", s, R, step=0.0)


def test_hindsight_interpolates_inside_ball():
    sol = best_in_hindsight([(np.eye(3), np.array([1, 0, 1]))], "squared", 10.0)
    np.testing.assert_allclose(sol.weights, [1, 0, 1], atol=1e-6)
    assert sol.loss == pytest.approx(0.0, abs=1e-10)
    assert sol.certified


def test_hindsight_on_the_boundary_matches_grid_search():
    R = np.array([1, 0, 1])
    sol = best_in_hindsight([(np.eye(3), R)], "squared", 1.0)
    axis = np.linspace(-1, 1, 81)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    grid = grid[np.linalg.norm(grid, axis=1) <= 1.0]
    losses = np.sum((grid - R) ** 2, axis=1)
    best = grid[np.argmin(losses)]
    assert sol.loss <= losses.min() + 1e-9
    assert np.linalg.norm(sol.weights - best) <= 0.05
    np.testing.assert_allclose(sol.weights, R / np.linalg.norm(R), atol=1e-6)


def test_hindsight_hinge_with_no_violated_pairs(rng):
    data = [(rng.normal(size=(4, 3)), np.full(4, 2)) for _ in range(5)]
    sol = best_in_hindsight(data, "ranksvm", 1.0)
    assert sol.loss == 0.0


def test_hindsight_rejects_non_convex():
    with pytest.raises(UnsupportedSurrogateError):
        best_in_hindsight([(np.eye(2), [1, 0])], "smoothdcg", 1.0)


@pytest.mark.parametrize("name", ["squared", "kl", "ranksvm"])
def test_hindsight_is_invariant_to_initialization(name, rng):
    data = synthetic_stream(SyntheticSpec(m=5, d=3, seed=2)).take(60)
    values = []
    for _ in range(5):
        init = rng.normal(size=3)
        init *= 2.0 * rng.random() / np.linalg.norm(init)
        values.append(best_in_hindsight(data, name, 2.0, init=init).loss)
    tol = 1e-7 if name != "ranksvm" else 1e-4 * abs(values[0])
    assert max(values) - min(values) <= tol


def test_zero_rate_regret_is_non_negative():
    data = synthetic_stream(SyntheticSpec(m=5, d=3, seed=8)).take(200)
    cfg = LearnerConfig("squared", horizon=200, eta=0.0, gamma=1e-12, radius=3.0)
    traj = run_game(cfg, data)
    at_zero = sum(Squared().loss(np.zeros(5), R) for _, R in data)
    report = regret_report(traj, data, "squared", 3.0)
    assert report.learner_loss == pytest.approx(at_zero)
    assert report.regret >= 0
    assert report.regret_per_round == pytest.approx(report.regret / 200)
    assert report.regret_per_t23 == pytest.approx(report.regret / 200 ** (2 / 3))


def test_replaying_hindsight_weights_has_no_regret():
    data = synthetic_stream(SyntheticSpec(m=5, d=3, seed=9)).take(300)
    sol = best_in_hindsight(data, "kl", 3.0)
    cfg = LearnerConfig("kl", horizon=300, eta=0.0, gamma=1e-12, radius=3.0)
    state = LearnerState(sol.weights, np.random.default_rng(0))
    total = 0.0
    for X, R in data:
        state, record = rtopkf_round(state, X, R, cfg)
        total += record.loss
    assert total - sol.loss == pytest.approx(0.0, abs=1e-9 * sol.loss)


def test_regret_report_length_check():
    data = synthetic_stream(SyntheticSpec(m=4, d=2)).take(10)
    traj = run_game(LearnerConfig("squared", horizon=10), data)
    with pytest.raises(InvalidInputError):
        regret_report(traj, data[:5], "squared", 1.0)


def test_variance_constants():
    assert variance_constant("squared", 3, 1.0, 2.0, 4) == 3**4 * 4 * 16
    assert variance_constant("ranksvm", 3, 2.0, 5.0, 4) == 16 * 81 * 4
    assert variance_constant("kl", 3, 1.0, 2.0, 4) == pytest.approx(9 * np.exp(4))


@pytest.mark.parametrize("name", ["squared", "ranksvm", "kl"])
def test_uniform_law_moment_is_below_constant(name):
    audit = variance_audit(name, 3, 1.0, trials=10)
    assert audit.bound == audit.constant
    assert audit.violations == 0


def test_squared_audit_small_gamma():
    audit = variance_audit("squared", 3, 0.1, trials=50)
    assert audit.violations == 0
    assert audit.measured <= audit.bound


def test_halving_gamma_respects_the_envelope():
    for name in ("squared", "ranksvm", "kl"):
        for gamma in (0.4, 0.2, 0.1):
            hi = variance_audit(name, 3, gamma, trials=15, seed=4)
            lo = variance_audit(name, 3, gamma / 2, trials=15, seed=4)
            assert np.all(lo.measurements <= lo.bound)
            slack = hi.bound - hi.measurements
            assert np.all(lo.measurements >= hi.measurements - slack)


def test_second_moment_matches_direct_sum(rng):
    X = rng.normal(size=(3, 2))
    w = rng.normal(size=2)
    R = np.array([2, 0, 1])
    s = X @ w
    dist = MixtureDistribution(np.argsort(-s, kind="stable"), 0.3)
    sq = Squared()
    direct = 0.0
    for perm, p in dist.support():
        top = perm[0]
        z = X.T @ (2 * s - 2 * R[top] * np.eye(3)[top] / dist.prefix_marginal((top,)))
        direct += p * z @ z
    assert second_moment(sq, X, w, R, 0.3) == pytest.approx(direct, rel=1e-12)


def test_audit_argument_checks():
    with pytest.raises(InvalidInputError):
        variance_audit("squared", 5, 0.1)
    with pytest.raises(UnsupportedSurrogateError):
        variance_audit("smoothdcg", 3, 0.1)
