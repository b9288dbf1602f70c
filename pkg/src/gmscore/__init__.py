"""GM Score: a composite quality and diversity score for class-labelled generative models."""

__version__ = "0.1.0"

from .diversity import (  # noqa: E402
    entropy_profile,
    inter_class_diversity,
    intra_class_diversity,
    regularize,
    sample_entropy,
)
from .discriminability import classification_metrics, extractor_average, train_logistic  # noqa: E402
from .ensemble import ensemble_score, majority_vote, score_ensembles  # noqa: E402
from .errors import GMScoreError  # noqa: E402
from .ingest import ClassCounts, ImageSet, LabelVector, ProbabilityMatrix  # noqa: E402
from .latent import train_dbn, train_rbm, transform  # noqa: E402
from .score import EvaluationConfig, ScoreReport, emit_report, evaluate_model, gm_score  # noqa: E402

__all__ = [
    "ClassCounts",
    "EvaluationConfig",
    "GMScoreError",
    "ImageSet",
    "LabelVector",
    "ProbabilityMatrix",
    "ScoreReport",
    "classification_metrics",
    "emit_report",
    "ensemble_score",
    "entropy_profile",
    "evaluate_model",
    "extractor_average",
    "gm_score",
    "inter_class_diversity",
    "intra_class_diversity",
    "majority_vote",
    "regularize",
    "sample_entropy",
    "score_ensembles",
    "train_dbn",
    "train_logistic",
    "train_rbm",
    "transform",
]
