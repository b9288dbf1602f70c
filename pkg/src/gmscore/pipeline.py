"""Native feature-extractor pipelines built from the latent and logistic modules.

Two uses: the latent-space discriminability test (features learned on real
data, classifier scored on generated data) and the built-in fallback
ensemble of seeded RBM -> logistic members.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .discriminability import (
    DiscriminabilityMetrics,
    LogisticConfig,
    classification_metrics,
    predict,
    predict_proba,
    train_logistic,
)
from .ensemble import EnsemblePredictions
from .errors import ConfigError
from .ingest import ImageSet, LabelVector, ProbabilityMatrix
from .latent import DbnConfig, RbmConfig, TrainingTrace, train_dbn, train_rbm, transform

logger = logging.getLogger(__name__)

ENSEMBLE_MEMBERS = 5


@dataclass
class LatentConfig:
    rbm: RbmConfig = field(default_factory=RbmConfig)
    dbn: DbnConfig = field(default_factory=DbnConfig)
    logistic: LogisticConfig = field(default_factory=LogisticConfig)


@dataclass(frozen=True)
class FeaturePipeline:
    """A trained extractor followed by a logistic classifier."""

    extractor: object
    classifier: object
    trace: Optional[TrainingTrace] = None
    pipeline_id: str = ""

    def features(self, data) -> np.ndarray:
        return transform(self.extractor, data)

    def predict_proba(self, data) -> ProbabilityMatrix:
        return predict_proba(self.classifier, self.features(data), self.pipeline_id)

    def predict(self, data) -> LabelVector:
        return predict(self.classifier, self.features(data))


def _rows(data) -> np.ndarray:
    return data.flattened() if isinstance(data, ImageSet) else np.asarray(data, dtype=np.float64)


def fit_pipeline(kind: str, data, labels: LabelVector, config: LatentConfig = None,
                 seed: Optional[int] = None, pipeline_id: str = "") -> FeaturePipeline:
    """Train an RBM or DBN on ``data``, then logistic regression on its features."""
    config = config or LatentConfig()
    X = _rows(data)
    if kind == "RBM":
        rbm_cfg = config.rbm if seed is None else replace(config.rbm, seed=seed)
        extractor, trace = train_rbm(X, rbm_cfg)
    elif kind == "DBN":
        dbn_cfg = config.dbn if seed is None else replace(config.dbn, seed=seed)
        extractor, trace = train_dbn(X, dbn_cfg)
    else:
        raise ConfigError(f"unknown extractor {kind!r}")
    classifier = train_logistic(transform(extractor, X), labels, config.logistic)
    return FeaturePipeline(extractor, classifier, trace, pipeline_id or kind)


def latent_discriminability(real_images, real_labels: LabelVector, gen_images, gen_labels: LabelVector,
                            config: LatentConfig = None, seed: int = 0):
    """Metrics of DBN- and RBM-feature classifiers trained on real, tested on generated.

    Returns ``(dbn_metrics, rbm_metrics, traces)``.
    """
    results, traces = {}, {}
    for kind in ("DBN", "RBM"):
        pipe = fit_pipeline(kind, real_images, real_labels, config, seed)
        pred = pipe.predict(_rows(gen_images))
        results[kind] = classification_metrics(pred, gen_labels, gen_labels.K, kind)
        traces[kind] = pipe.trace
        logger.info("%s discriminability: accuracy %.4f", kind, results[kind].accuracy)
    return results["DBN"], results["RBM"], traces


def native_ensembles(real_train, real_train_labels: LabelVector, real_test, real_test_labels: LabelVector,
                     gen_images, gen_labels: LabelVector, config: LatentConfig = None, seed: int = 0,
                     members: int = ENSEMBLE_MEMBERS) -> Tuple[EnsemblePredictions, EnsemblePredictions]:
    """Fallback forward/reverse ensembles of seeded RBM -> logistic pipelines.

    Forward members learn from real data and predict the generated set;
    reverse members learn from the generated set and predict the real test set.
    """
    if np.unique(gen_labels.labels).size < 2:
        raise ConfigError("generated set needs at least two classes to train reverse ensemble members")
    forward, reverse, fids, rids = [], [], [], []
    for i in range(members):
        fwd = fit_pipeline("RBM", real_train, real_train_labels, config, seed + i, f"native-forward-{i}")
        forward.append(fwd.predict(_rows(gen_images)))
        fids.append(fwd.pipeline_id)
        rev = fit_pipeline("RBM", gen_images, gen_labels, config, seed + i, f"native-reverse-{i}")
        reverse.append(rev.predict(_rows(real_test)))
        rids.append(rev.pipeline_id)
    return (
        EnsemblePredictions(tuple(forward), "forward", tuple(fids), gen_labels),
        EnsemblePredictions(tuple(reverse), "reverse", tuple(rids), real_test_labels),
    )
