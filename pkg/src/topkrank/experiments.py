"""Experiment configuration, data loading and the multi-seed drivers behind the CLI."""

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .data import QueryStream, SyntheticSpec, parse_letor, prepare_corpus, synthetic_stream
from .exceptions import InvalidConfigError, UnsupportedSurrogateError
from .learner import BASELINES, LearnerConfig, run_baseline, run_game, take_rounds
from .oracle import best_in_hindsight, regret_from_losses
from .surrogates import KlListwise, RankSvmHinge, Squared, get_surrogate

TRAJECTORY_HEADER = ("round", "loss", "ndcg_at_k", "avg_ndcg_at_k", "explored", "weight_norm")
SCAN_HEADER = ("horizon", "regret", "regret_per_round", "regret_per_t23", "hindsight_loss", "n_seeds")


def _parse_ints(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _parse_synthetic(text):
    parts = [x.strip() for x in str(text).split(",")]
    if len(parts) != 3:
        raise InvalidConfigError(f"synthetic must be 'm,d,noise', got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise InvalidConfigError(f"synthetic must be 'm,d,noise', got {text!r}") from None


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise InvalidConfigError(f"expected a boolean, got {text!r}")


def _optional(parse):
    def inner(text):
        return None if str(text).strip().lower() in ("", "none") else parse(text)
    return inner


_PARSERS = {
    "surrogate": str,
    "horizon": int,
    "gamma": _optional(float),
    "eta": _optional(float),
    "radius": float,
    "seed": int,
    "epsilon": float,
    "metric_cutoff": int,
    "feedback_depth": _optional(int),
    "data": _optional(str),
    "synthetic": _parse_synthetic,
    "data_seed": int,
    "max_grade": int,
    "doc_radius": float,
    "max_docs": int,
    "shuffle": _parse_bool,
    "baseline": _optional(str),
    "comparator": _parse_bool,
    "horizons": _parse_ints,
    "n_seeds": int,
    "n_jobs": int,
    "out_dir": str,
}


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Settings for every subcommand.

    Learning rate and exploration default to ``T^(-2/3)`` and ``T^(-1/3)``
    (``T^(-1/2)`` for the full-feedback baseline), SmoothDcg's temperature to
    0.01 and the NDCG cutoff to 10.  Without ``data`` a synthetic stream with
    ``synthetic = m, d, noise`` is generated from ``data_seed``; ``seed``
    drives the learner.
    """

    surrogate: str = "squared"
    horizon: int = 1000
    gamma: Optional[float] = None
    eta: Optional[float] = None
    radius: float = 10.0
    seed: int = 0
    epsilon: float = 0.01
    metric_cutoff: int = 10
    feedback_depth: Optional[int] = None
    data: Optional[str] = None
    synthetic: tuple = (10, 5, 0.1)
    data_seed: int = 0
    max_grade: int = 4
    doc_radius: float = 1.0
    max_docs: int = 100
    shuffle: bool = False
    baseline: Optional[str] = None
    comparator: bool = False
    horizons: tuple = (1000, 10000, 100000)
    n_seeds: int = 5
    n_jobs: int = 1
    out_dir: str = "."

    def __post_init__(self):
        self.surrogate = str(self.surrogate).lower()
        get_surrogate(self.surrogate)
        if self.baseline is not None and self.baseline not in BASELINES:
            raise InvalidConfigError(f"unknown baseline {self.baseline!r}; choose from {BASELINES}")
        if self.horizon < 1:
            raise InvalidConfigError("horizon must be at least 1")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise InvalidConfigError("horizons must be positive")
        if list(self.horizons) != sorted(set(self.horizons)):
            raise InvalidConfigError(f"horizons must be strictly ascending, got {self.horizons}")
        if self.n_seeds < 1:
            raise InvalidConfigError("n_seeds must be at least 1")
        m, d, noise = self.synthetic
        if m < 2 or d < 1 or not 0.0 <= noise < 0.5:
            raise InvalidConfigError(f"synthetic needs m >= 2, d >= 1, 0 <= noise < 0.5, got {self.synthetic}")
        # surface invalid learner settings at load time
        self.learner_config()

    def learner_config(self, horizon=None, seed=None, surrogate=None):
        return LearnerConfig(
            surrogate=surrogate or self.surrogate,
            horizon=self.horizon if horizon is None else horizon,
            gamma=self.gamma,
            eta=self.eta,
            radius=self.radius,
            seed=self.seed if seed is None else seed,
            metric_cutoff=self.metric_cutoff,
            epsilon=self.epsilon,
            feedback_depth=self.feedback_depth,
        )

    def to_text(self):
        lines = ["# topkrank experiment configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            if key not in _PARSERS:
                raise InvalidConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[key](value.strip())
            except ValueError as exc:
                raise InvalidConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        return (base or cls()).replace(**values)

    @classmethod
    def from_file(cls, path, base=None):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), base)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def replace(self, **changes):
        unknown = set(changes) - set(_PARSERS)
        if unknown:
            raise InvalidConfigError(f"unknown keys {sorted(unknown)}")
        return dataclasses.replace(self, **changes)


# --- data ------------------------------------------------------------------------


def make_stream(cfg):
    """The (X, R) source described by ``cfg``: a prepared LETOR file or a synthetic stream."""
    if cfg.data is not None:
        corpus, _ = prepare_corpus(parse_letor(cfg.data), cfg.doc_radius, cfg.max_grade, cfg.max_docs)
        return QueryStream(corpus, cycle=True, shuffle=cfg.shuffle, seed=cfg.data_seed)
    m, d, noise = cfg.synthetic
    spec = SyntheticSpec(m=m, d=d, noise=noise, max_grade=cfg.max_grade,
                         doc_radius=cfg.doc_radius, seed=cfg.data_seed)
    return synthetic_stream(spec)


def load_rounds(cfg, horizon=None):
    """The first ``horizon`` rounds of the configured stream as a list."""
    return take_rounds(make_stream(cfg), cfg.horizon if horizon is None else horizon)


# --- single runs -----------------------------------------------------------------


def play(cfg, rounds, method=None, seed=None, horizon=None):
    """Run ``method`` (a partial-feedback surrogate name or a baseline) on ``rounds``."""
    method = method or cfg.baseline or cfg.surrogate
    if method in BASELINES:
        lc = cfg.learner_config(horizon=horizon, seed=seed)
        return run_baseline(method, lc, rounds)
    return run_game(cfg.learner_config(horizon=horizon, seed=seed, surrogate=method), rounds)


def _check_comparator(name):
    sur = get_surrogate(name)
    if not isinstance(sur, (Squared, KlListwise, RankSvmHinge)):
        raise UnsupportedSurrogateError(
            f"regret needs a convex comparator; {sur.name} is not supported"
        )


def trajectory_csv(traj):
    """CSV text of a trajectory; floats use ``repr`` so identical runs give identical bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    avg = traj.running_ndcg()
    for t in range(len(traj)):
        writer.writerow((
            t + 1, repr(float(traj.losses[t])), repr(float(traj.ndcg[t])),
            repr(float(avg[t])), int(traj.explored[t]), repr(float(traj.weight_norms[t])),
        ))
    return buf.getvalue()


def run_experiment(cfg):
    """Play one game and return ``(trajectory, summary dict)``."""
    if cfg.comparator:
        if cfg.baseline is not None:
            raise InvalidConfigError("a regret comparator is only available for top-k learners")
        _check_comparator(cfg.surrogate)
    rounds = load_rounds(cfg)
    traj = play(cfg, rounds)
    summary = {
        "method": cfg.baseline or cfg.surrogate,
        "horizon": len(traj),
        "seed": cfg.seed,
        "gamma": traj.meta.get("gamma"),
        "eta": traj.meta.get("eta"),
        "radius": cfg.radius,
        "cumulative_loss": traj.cumulative_loss,
        "mean_loss": traj.cumulative_loss / len(traj),
        "final_avg_ndcg_at_k": traj.average_ndcg,
        "explored_rounds": int(traj.explored.sum()),
        "judged_rounds": int(traj.judged.sum()),
        "final_weight_norm": float(traj.weight_norms[-1]),
    }
    if cfg.comparator:
        sol = best_in_hindsight(rounds, cfg.surrogate, cfg.radius)
        report = regret_from_losses(traj.cumulative_loss, sol.loss, len(traj), sol.weights)
        summary.update(
            hindsight_loss=report.hindsight_loss,
            hindsight_certified=sol.certified,
            regret=report.regret,
            regret_per_round=report.regret_per_round,
            regret_per_t23=report.regret_per_t23,
        )
    return traj, summary


def summary_text(summary):
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in summary.items())


# --- multi-seed drivers ----------------------------------------------------------


def _seeds(cfg, n_seeds=None):
    return [cfg.seed + i for i in range(cfg.n_seeds if n_seeds is None else n_seeds)]


def _game_loss(cfg, rounds, horizon, seed):
    return play(cfg, rounds, method=cfg.surrogate, seed=seed, horizon=horizon).cumulative_loss


def regret_scan(cfg, horizons=None, n_seeds=None):
    """Mean regret of the configured surrogate at each horizon.

    The comparator for horizon ``T`` is the best fixed weights on the first
    ``T`` rounds of the (fixed) stream; learner seeds are ``seed, seed + 1, ...``.
    """
    _check_comparator(cfg.surrogate)
    if cfg.baseline is not None:
        raise InvalidConfigError("regret-scan runs top-k learners only; unset baseline")
    horizons = tuple(cfg.horizons if horizons is None else horizons)
    seeds = _seeds(cfg, n_seeds)
    rounds = load_rounds(cfg, max(horizons))
    rows = []
    for T in horizons:
        prefix = rounds[:T]
        sol = best_in_hindsight(prefix, cfg.surrogate, cfg.radius)
        losses = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_game_loss)(cfg, prefix, T, seed) for seed in seeds
        )
        regret = math.fsum(losses) / len(losses) - sol.loss
        rows.append({
            "horizon": T,
            "regret": regret,
            "regret_per_round": regret / T,
            "regret_per_t23": regret / T ** (2.0 / 3.0),
            "hindsight_loss": sol.loss,
            "n_seeds": len(seeds),
        })
    return rows


def scan_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCAN_HEADER)
    for row in rows:
        writer.writerow([_format_value(row[h]) if isinstance(row[h], float) else row[h]
                         for h in SCAN_HEADER])
    return buf.getvalue()


def _final_ndcg(cfg, rounds, method, seed):
    return play(cfg, rounds, method=method, seed=seed).average_ndcg


def compare_methods(cfg, methods, n_seeds=None):
    """Final average NDCG@k of each method, averaged over learner seeds."""
    rounds = load_rounds(cfg)
    seeds = _seeds(cfg, n_seeds)
    jobs = [(method, seed) for method in methods for seed in seeds]
    values = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_final_ndcg)(cfg, rounds, method, seed) for method, seed in jobs
    )
    out = {}
    for (method, _), value in zip(jobs, values):
        out.setdefault(method, []).append(value)
    return {method: float(np.mean(v)) for method, v in out.items()}
