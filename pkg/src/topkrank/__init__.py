"""Online learning to rank from top-k feedback."""

from .core import Permutation, argsort_desc, dcg_at_k, ndcg_at_k, project_l2_ball, z_k
from .data import Query, SyntheticSpec, parse_letor, prepare_corpus, synthetic_stream
from .exceptions import (
    DataError,
    DegenerateDistributionError,
    InvalidConfigError,
    InvalidInputError,
    ParseError,
    UnsupportedSurrogateError,
)
from .learner import (
    FullFeedbackListNet,
    LearnerConfig,
    RandomRanker,
    TopKRanker,
    run_baseline,
    run_game,
)
from .sampling import MixtureDistribution, TopKFeedback, extract_feedback
from .surrogates import (
    KlListwise,
    ListNetCrossEntropy,
    RankSvmHinge,
    SmoothDcg,
    Squared,
    get_surrogate,
)

__version__ = "0.1.0"

__all__ = [
    "DataError", "DegenerateDistributionError", "FullFeedbackListNet", "InvalidConfigError",
    "InvalidInputError", "KlListwise", "LearnerConfig", "ListNetCrossEntropy",
    "MixtureDistribution", "ParseError", "Permutation", "Query", "RandomRanker",
    "RankSvmHinge", "SmoothDcg", "Squared", "SyntheticSpec", "TopKFeedback", "TopKRanker",
    "UnsupportedSurrogateError", "argsort_desc", "dcg_at_k", "extract_feedback",
    "get_surrogate", "ndcg_at_k", "parse_letor", "prepare_corpus", "project_l2_ball",
    "run_baseline", "run_game", "synthetic_stream", "z_k",
]
