"""Named property suites with fixed sizes and tolerances, shared by the CLI and tests.

Each suite returns a list of :class:`CheckResult`; a suite passes iff every
result does.
"""

import itertools
from typing import NamedTuple

import numpy as np

from .core import argsort_desc
from .impossibility import (
    load_counterexample,
    top1_feedback_law,
    verify_counterexample,
)
from .oracle import expected_estimate, finite_diff_gradient, variance_audit
from .sampling import MixtureDistribution
from .surrogates import get_surrogate

UNBIASED_CASES = (("squared", 1), ("kl", 1), ("smoothdcg", 1), ("ranksvm", 2))
UNBIASED_SIZES = (2, 3, 4)
UNBIASED_CONFIGS = 20
UNBIASED_TOL = 1e-9

MARGINAL_MAX_M = 6
MARGINAL_GAMMAS = 10
MARGINAL_TOL = 1e-12

GRADIENT_SURROGATES = ("squared", "ranksvm", "kl", "smoothdcg", "listnet")
GRADIENT_POINTS = 50
GRADIENT_TOL = 1e-5
HINGE_KINK_MARGIN = 1e-3

VARIANCE_SURROGATES = ("squared", "ranksvm", "kl")
VARIANCE_GAMMAS = (0.05, 0.1, 0.25, 0.49)
VARIANCE_SIZES = (2, 3, 4)
VARIANCE_TRIALS = 50

IMPOSSIBILITY_MARGINALS = (0.45, 0.45, 0.4)
IMPOSSIBILITY_CALIBRATED_P = (0.3533, 0.3920, 0.3226)
IMPOSSIBILITY_CALIBRATED_Q = (0.3339, 0.3339, 0.4000)
IMPOSSIBILITY_MARGINAL_TOL = 1e-12
IMPOSSIBILITY_CALIBRATED_TOL = 5e-5
FEEDBACK_LAW_SCORES = 100
FEEDBACK_LAW_TOL = 1e-12


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _random_case(rng, name, m):
    R = rng.integers(0, 5, size=m)
    if name == "smoothdcg":
        # keep s / epsilon moderate so the softmax is not a point mass
        s = 0.02 * rng.normal(size=m)
    else:
        s = rng.normal(size=m)
    return s, R


def check_unbiased(seed=0, n_configs=UNBIASED_CONFIGS, sizes=UNBIASED_SIZES, tol=UNBIASED_TOL):
    """Exact mean of each estimator under the exploration law equals the true gradient."""
    rng = np.random.default_rng(seed)
    results = []
    for name, k in UNBIASED_CASES:
        sur = get_surrogate(name)
        for m in sizes:
            worst = 0.0
            for _ in range(n_configs):
                s, R = _random_case(rng, name, m)
                gamma = float(rng.uniform(0.01, 0.49))
                dist = MixtureDistribution(argsort_desc(s), gamma)
                mean = expected_estimate(sur, s, R, dist, k)
                worst = max(worst, float(np.max(np.abs(mean - sur.gradient(s, R)))))
            results.append(CheckResult(
                f"unbiased {name} top-{k} m={m}", worst <= tol,
                f"max |E[estimate] - gradient| = {worst:.3e} (tol {tol:g})",
            ))
    return results


def check_marginals(seed=0, max_m=MARGINAL_MAX_M, n_gammas=MARGINAL_GAMMAS, tol=MARGINAL_TOL):
    """Closed-form prefix marginals of the mixture equal sums over its full table."""
    rng = np.random.default_rng(seed)
    results = []
    for m in range(2, max_m + 1):
        worst = 0.0
        for _ in range(n_gammas):
            dist = MixtureDistribution(rng.permutation(m), float(rng.uniform(1e-3, 1 - 1e-3)))
            table = list(dist.support())
            for length in (1, 2):
                for prefix in itertools.permutations(range(m), length):
                    brute = sum(p for perm, p in table if perm[:length] == prefix)
                    worst = max(worst, abs(dist.prefix_marginal(prefix) - brute))
        results.append(CheckResult(
            f"marginals m={m}", worst <= tol,
            f"max |closed form - enumeration| = {worst:.3e} (tol {tol:g})",
        ))
    return results


def _near_hinge_kink(s, R, margin):
    diffs = 1.0 + s[None, :] - s[:, None]  # 1 + s_j - s_i at [i, j]
    ordered = R[:, None] > R[None, :]
    return bool(np.any(ordered & (np.abs(diffs) < margin)))


def check_gradients(seed=0, n_points=GRADIENT_POINTS, tol=GRADIENT_TOL):
    """Central finite differences agree with the analytic gradients."""
    rng = np.random.default_rng(seed)
    results = []
    for name in GRADIENT_SURROGATES:
        sur = get_surrogate(name)
        worst, done = 0.0, 0
        while done < n_points:
            m = int(rng.integers(2, 8))
            s, R = _random_case(rng, name, m)
            if name == "ranksvm" and _near_hinge_kink(s, R, HINGE_KINK_MARGIN):
                continue
            g = sur.gradient(s, R)
            fd = finite_diff_gradient(sur, s, R)
            scale = max(float(np.linalg.norm(g)), 1e-8)
            worst = max(worst, float(np.linalg.norm(fd - g)) / scale)
            done += 1
        results.append(CheckResult(
            f"gradient {name}", worst <= tol,
            f"max relative error = {worst:.3e} over {n_points} points (tol {tol:g})",
        ))
    return results


def check_variance(seed=0, trials=VARIANCE_TRIALS, gammas=VARIANCE_GAMMAS, sizes=VARIANCE_SIZES):
    """Exact second moments of the weight-gradient estimates stay below ``C / gamma``."""
    results = []
    for name in VARIANCE_SURROGATES:
        for m in sizes:
            for gamma in gammas:
                audit = variance_audit(name, m, gamma, trials=trials, seed=seed)
                results.append(CheckResult(
                    f"variance {name} m={m} gamma={gamma}", audit.violations == 0,
                    f"max E||z||^2 = {audit.measured:.4g} <= {audit.bound:.4g}, "
                    f"{audit.violations} violations in {trials}",
                ))
    return results


def check_impossibility(seed=0, source=None):
    """The bundled top-1 counterexample has the expected marginals, calibrated scores and verdict."""
    p, q = load_counterexample(source)
    report = verify_counterexample(p, q)
    results = []
    for label, got in (("p", report.marginals_p), ("q", report.marginals_q)):
        err = float(np.max(np.abs(got - np.array(IMPOSSIBILITY_MARGINALS))))
        results.append(CheckResult(
            f"marginals under {label}", err <= IMPOSSIBILITY_MARGINAL_TOL,
            f"E[R] = {tuple(round(float(x), 12) for x in got)}",
        ))
    for label, got, want in (("p", report.calibrated_p, IMPOSSIBILITY_CALIBRATED_P),
                             ("q", report.calibrated_q, IMPOSSIBILITY_CALIBRATED_Q)):
        err = float(np.max(np.abs(got - np.array(want))))
        results.append(CheckResult(
            f"calibrated scores under {label}", err <= IMPOSSIBILITY_CALIBRATED_TOL,
            f"E[G(R)/Z(R)] = ({', '.join(f'{x:.4f}' for x in got)}), max error {err:.1e}",
        ))
    results.append(CheckResult("top-1 indistinguishable", report.indistinguishable,
                               f"{report.indistinguishable}"))
    results.append(CheckResult("optimal orderings differ", report.orderings_differ,
                               f"p: {report.rankings_p}, q: {report.rankings_q}"))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(FEEDBACK_LAW_SCORES):
        s = rng.normal(size=p.m)
        worst = max(worst, abs(top1_feedback_law(p, s) - top1_feedback_law(q, s)))
    results.append(CheckResult(
        "top-1 feedback laws agree", worst <= FEEDBACK_LAW_TOL,
        f"max gap over {FEEDBACK_LAW_SCORES} score vectors = {worst:.1e}",
    ))
    results.append(CheckResult("verdict", report.verdict, f"{report.verdict}"))
    return results


SUITES = {
    "unbiased": check_unbiased,
    "gradients": check_gradients,
    "marginals": check_marginals,
    "variance": check_variance,
    "impossibility": check_impossibility,
}


def run_suite(name, seed=0):
    return SUITES[name](seed=seed)
