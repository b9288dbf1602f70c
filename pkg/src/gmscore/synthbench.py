"""Synthetic count vectors and probability matrices with known diversity behaviour.

Profiles are given as short strings: ``"uniform"``, ``"skewed(0.5)"``,
``"single_class"`` for class counts, and ``"one_hot"``, ``"uniform"``,
``"temperature(1.0)"`` for label-distribution sharpness.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from .errors import ConfigError
from .ingest import ClassCounts, LabelVector, ProbabilityMatrix

_PARAM_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")

LOGIT_MARGIN = 3.0


def parse_profile(text: str) -> Tuple[str, Optional[float]]:
    """``"skewed(0.5)"`` -> ``("skewed", 0.5)``; ``"uniform"`` -> ``("uniform", None)``."""
    m = _PARAM_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse profile {text!r}")
    return m.group(1), float(m.group(2)) if m.group(2) is not None else None


@dataclass(frozen=True)
class SynthSpec:
    K: int = 10
    samples_per_class: int = 1000
    bias_profile: str = "uniform"
    sharpness: str = "temperature(0.5)"
    collapse_classes: FrozenSet[int] = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be positive")
        kind, gamma = parse_profile(self.bias_profile)
        if kind not in ("uniform", "skewed", "single_class"):
            raise ConfigError(f"unknown bias profile {self.bias_profile!r}")
        if kind == "skewed" and (gamma is None or gamma < 0):
            raise ConfigError("skewed profile needs gamma >= 0")
        kind, tau = parse_profile(self.sharpness)
        if kind not in ("one_hot", "uniform", "temperature"):
            raise ConfigError(f"unknown sharpness {self.sharpness!r}")
        if kind == "temperature" and (tau is None or tau <= 0):
            raise ConfigError("temperature must be positive")
        bad = [c for c in self.collapse_classes if not 0 <= c < self.K]
        if bad:
            raise ConfigError(f"collapse classes {bad} outside [0, {self.K - 1}]")
        object.__setattr__(self, "collapse_classes", frozenset(self.collapse_classes))


def synth_counts(spec: SynthSpec) -> ClassCounts:
    """Counts per class: equal, geometric decay by gamma, or all in class 0."""
    kind, gamma = parse_profile(spec.bias_profile)
    n = spec.samples_per_class
    if kind == "uniform":
        counts = np.full(spec.K, n)
    elif kind == "skewed":
        counts = np.rint(n * gamma ** np.arange(spec.K)).astype(np.int64)
    else:
        counts = np.zeros(spec.K, dtype=np.int64)
        counts[0] = n
    return ClassCounts(counts, f"synth-{kind}")


def _labels_for(counts: ClassCounts) -> np.ndarray:
    return np.repeat(np.arange(counts.K), counts.counts)


def synth_probabilities(spec: SynthSpec, counts: ClassCounts = None):
    """Probability rows for each synthetic sample, with their class labels.

    ``temperature(tau)`` rows are ``softmax((z + margin * onehot) / tau)``
    for seeded standard-normal logits ``z``; the same logits are drawn for
    every tau so tempering is the only difference.  Classes listed in
    ``collapse_classes`` repeat their first row for every sample.
    """
    counts = counts if counts is not None else synth_counts(spec)
    y = _labels_for(counts)
    K, N = spec.K, y.size
    kind, tau = parse_profile(spec.sharpness)
    onehot = np.eye(K)[y]
    if kind == "one_hot":
        rows = onehot
    elif kind == "uniform":
        rows = np.full((N, K), 1.0 / K)
    else:
        rng = np.random.default_rng(spec.seed)
        logits = rng.standard_normal((N, K)) + LOGIT_MARGIN * onehot
        rows = softmax(logits / tau, axis=1)
    for c in spec.collapse_classes:
        idx = np.flatnonzero(y == c)
        if idx.size:
            rows[idx] = rows[idx[0]]
    return ProbabilityMatrix(rows, f"synth-{kind}"), LabelVector(y, K)


def _blend_entropy(t: float, K: int) -> float:
    # entropy of (1 - t) * onehot + t * uniform
    hot = 1.0 - t + t / K
    cold = t / K
    out = -hot * np.log(hot) if hot > 0 else 0.0
    if cold > 0:
        out -= (K - 1) * cold * np.log(cold)
    return out


def row_with_entropy(target: float, K: int, label: int = 0, tol: float = 1e-12) -> np.ndarray:
    """A probability row peaked at ``label`` whose entropy equals ``target``."""
    if not 0.0 <= target <= np.log(K) + 1e-12:
        raise ConfigError(f"entropy {target} outside [0, ln {K}]")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _blend_entropy(mid, K) < target:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    row = np.full(K, t / K)
    row[label] += 1.0 - t
    return row


def entropy_matched_probabilities(
    means: Sequence[float], stds: Sequence[float], samples_per_class: int, K: Optional[int] = None
):
    """Rows whose per-class entropy mean matches ``means`` exactly.

    Each class mixes sharp rows (entropy 0) with rows at one higher entropy
    level; the mix fraction is picked so the population std approximates
    ``stds``.  Used to rebuild reference per-class entropy tables.
    """
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    K = K or means.size
    n = samples_per_class
    rows, labels = [], []
    for c, (m, s) in enumerate(zip(means, stds)):
        if m <= 0 or s <= 0:
            block = np.tile(row_with_entropy(max(m, 0.0), K, c), (n, 1))
        else:
            q = s * s / (m * m + s * s)
            n0 = min(int(round(q * n)), n - 1)
            level = m * n / (n - n0)
            high = row_with_entropy(level, K, c)
            block = np.vstack([np.tile(np.eye(K)[c], (n0, 1)), np.tile(high, (n - n0, 1))])
        rows.append(block)
        labels.append(np.full(n, c))
    return ProbabilityMatrix(np.vstack(rows), "entropy-matched"), LabelVector(np.concatenate(labels), K)
