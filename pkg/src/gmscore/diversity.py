"""Inter-class and intra-class diversity terms.

Inter-class diversity scores how evenly a generator covers the classes:
``1 - MAD / mean`` over the per-class sample counts.  Intra-class diversity
averages the Shannon entropy (natural log) of a classifier's label
distribution over the samples of each class, then over classes, and is
penalised above the overdiversity coefficient ``beta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import ConfigError, EmptyInput, RangeError
from .ingest import ClassCounts, LabelVector, ProbabilityMatrix

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-6
DEFAULT_BETA = 0.5
DEFAULT_SIGMA_CRIT = 0.2


@dataclass(frozen=True)
class InterClassDiversity:
    value: float
    mean_count: float
    mad: float


@dataclass(frozen=True)
class EntropyProfile:
    """Per-class entropy statistics over one generated sample set.

    ``per_class_mean`` and ``per_class_std`` are NaN for classes without
    samples.  ``sample_entropies`` keeps the raw per-sample values so they
    can be exported for plotting.
    """

    per_class_mean: np.ndarray
    per_class_std: np.ndarray
    per_class_count: np.ndarray
    overall_mean: float
    collapse_flags: np.ndarray
    insufficient: np.ndarray
    sample_entropies: np.ndarray
    sigma_crit: float
    warnings: List[str] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.per_class_mean.shape[0]

    @property
    def populated(self) -> np.ndarray:
        return self.per_class_count > 0

    @property
    def contributions(self) -> np.ndarray:
        """Per-class terms of the intra-class mean: zero when collapsed, NaN when empty."""
        return np.where(self.collapse_flags, 0.0, self.per_class_mean)


@dataclass(frozen=True)
class IntraClassDiversity:
    raw: float
    regularized: float
    beta: float
    was_regularized: bool
    warnings: List[str] = field(default_factory=list)


def inter_class_diversity(counts) -> InterClassDiversity:
    """``1 - MAD/mean`` of the per-class counts; 1.0 means perfectly even coverage."""
    if not isinstance(counts, ClassCounts):
        counts = ClassCounts(np.asarray(counts))
    c = counts.counts.astype(np.float64)
    mu = c.mean()
    if mu <= 0:
        raise EmptyInput("all class counts are zero")
    mad = np.abs(c - mu).mean()
    value = 1.0 - mad / mu
    if value <= 0:
        # heavily concentrated counts, e.g. a single populated class
        logger.warning("inter-class diversity %.4f <= 0 (MAD %.4g >= mean %.4g)", value, mad, mu)
    return InterClassDiversity(float(value), float(mu), float(mad))


def sample_entropy(row) -> float:
    """Shannon entropy (nats) of one probability vector.

    Zero entries contribute nothing; positive entries below ``PROB_FLOOR``
    are floored inside the log.
    """
    p = np.asarray(row, dtype=np.float64)
    if (p < 0).any():
        raise RangeError("probabilities must be non-negative")
    return float(_entropies(p[None, :])[0])


_BLOCK_ROWS = 8192  # keeps temporaries cache-sized, so cost stays linear in N


def _entropies(rows: np.ndarray) -> np.ndarray:
    out = np.empty(rows.shape[0])
    for start in range(0, rows.shape[0], _BLOCK_ROWS):
        block = rows[start : start + _BLOCK_ROWS]
        logs = np.log(np.maximum(block, PROB_FLOOR))
        terms = np.where(block > 0, block * logs, 0.0)
        out[start : start + _BLOCK_ROWS] = -terms.sum(axis=1)
    return np.maximum(out, 0.0)


def sample_entropies(probs: ProbabilityMatrix) -> np.ndarray:
    return _entropies(probs.rows)


def entropy_profile(
    probs: ProbabilityMatrix, labels: LabelVector, sigma_crit: float = DEFAULT_SIGMA_CRIT
) -> EntropyProfile:
    """Group per-sample entropies by class and flag single-mode collapse.

    A class is flagged collapsed when it has at least two samples and the
    population standard deviation of their entropies is below ``sigma_crit``.
    """
    if sigma_crit < 0:
        raise ConfigError("sigma_crit must be non-negative")
    if len(probs) == 0:
        raise EmptyInput("no samples")
    labels.check_pairs(len(probs), "probability rows")
    K = max(labels.K, probs.K)
    ent = sample_entropies(probs)
    y = labels.labels

    count = np.bincount(y, minlength=K).astype(np.int64)
    # shift each class by one of its own entropies so identical rows give std exactly 0
    shift = np.zeros(K)
    shift[y[::-1]] = ent[::-1]
    d = ent - shift[y]
    n = np.maximum(count, 1)
    d_mean = np.bincount(y, weights=d, minlength=K) / n
    sq = np.bincount(y, weights=(d - d_mean[y]) ** 2, minlength=K)
    mean = np.where(count > 0, shift + d_mean, np.nan)
    std = np.where(count > 0, np.sqrt(sq / n), np.nan)

    populated = count > 0
    insufficient = count == 1
    collapse = (count >= 2) & (np.nan_to_num(std, nan=np.inf) < sigma_crit)

    warnings = []
    for i in np.flatnonzero(~populated):
        warnings.append(f"class {i}: no generated samples; excluded from intra-class mean")
    for i in np.flatnonzero(insufficient):
        warnings.append(f"class {i}: single sample, insufficient data for collapse check")
    for i in np.flatnonzero(collapse):
        warnings.append(
            f"class {i}: entropy std {std[i]:.4f} < sigma_crit {sigma_crit:g}; single-mode collapse"
        )
    for w in warnings:
        logger.warning(w)

    return EntropyProfile(
        per_class_mean=mean,
        per_class_std=std,
        per_class_count=count,
        overall_mean=float(mean[populated].mean()),
        collapse_flags=collapse,
        insufficient=insufficient,
        sample_entropies=ent,
        sigma_crit=float(sigma_crit),
        warnings=warnings,
    )


def regularize(raw: float, beta: float = DEFAULT_BETA) -> float:
    """Overdiversity penalty: values above ``beta`` are reflected to ``beta - |raw - beta|``."""
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    return beta - abs(raw - beta) if raw > beta else raw


def intra_class_diversity(profile, beta: float = DEFAULT_BETA) -> IntraClassDiversity:
    """Regularised intra-class diversity from an entropy profile.

    Collapsed classes contribute zero to the class mean; empty classes are
    left out.  A plain float is taken as an already-averaged raw value.
    """
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if isinstance(profile, EntropyProfile):
        raw = float(profile.contributions[profile.populated].mean())
    else:
        raw = float(profile)
        if raw < 0:
            raise RangeError("intra-class diversity cannot be negative")
    reg = regularize(raw, beta)
    warnings = []
    if reg < 0:
        msg = (
            f"intra-class diversity {raw:.4f} exceeds 2*beta ({2 * beta:g}); "
            f"regularized value {reg:.4f} is negative"
        )
        logger.warning(msg)
        warnings.append(msg)
    return IntraClassDiversity(raw, float(reg), float(beta), raw > beta, warnings)
