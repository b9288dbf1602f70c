"""Majority-vote classifier ensembles and the ensemble score.

The forward ensemble is trained on real data and tested on generated data;
the reverse ensemble is trained on generated data and tested on real data.
ES = 1 - |acc_forward - acc_reverse|, with accuracies carried as fractions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, EmptyInput, FormatError, PairingError, RangeError
from .ingest import LabelVector, ProbabilityMatrix, read_labels, read_probability_matrix

logger = logging.getLogger(__name__)

DIRECTIONS = ("forward", "reverse")


@dataclass(frozen=True)
class EnsemblePredictions:
    member_predictions: tuple
    direction: str = "forward"
    member_ids: tuple = ()
    truth: Optional[LabelVector] = None

    def __post_init__(self):
        members = tuple(
            LabelVector(np.argmax(m.rows, axis=1), m.K) if isinstance(m, ProbabilityMatrix) else m
            for m in self.member_predictions
        )
        if not members:
            raise EmptyInput("an ensemble needs at least one member")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        lengths = {len(m) for m in members}
        if len(lengths) != 1:
            raise PairingError(f"ensemble members predict differing sample counts {sorted(lengths)}")
        if self.truth is not None:
            self.truth.check_pairs(lengths.pop(), "ensemble predictions")
        object.__setattr__(self, "member_predictions", members)

    @property
    def K(self) -> int:
        return max(m.K for m in self.member_predictions)


@dataclass(frozen=True)
class EnsembleScore:
    """``es = 1 - |alpha_c - alpha_cr|``; alphas are None when ES was supplied directly."""

    es: float
    alpha_c: Optional[float] = None
    alpha_cr: Optional[float] = None


def majority_vote(preds) -> LabelVector:
    """Per-sample modal label; ties go to the smallest tied label."""
    if not isinstance(preds, EnsemblePredictions):
        preds = EnsemblePredictions(tuple(preds))
    K = preds.K
    stacked = np.stack([m.labels for m in preds.member_predictions])  # (M, N)
    N = stacked.shape[1]
    votes = np.zeros((N, K), dtype=np.int64)
    for row in stacked:
        np.add.at(votes, (np.arange(N), row), 1)
    # argmax returns the first maximum, i.e. the smallest label among ties
    return LabelVector(np.argmax(votes, axis=1), K)


def ensemble_accuracy(voted: LabelVector, truth: LabelVector) -> float:
    if len(voted) != len(truth):
        raise PairingError(f"{len(voted)} predictions for {len(truth)} truth labels")
    if len(truth) == 0:
        raise PairingError("accuracy needs at least one sample")
    return float(np.mean(voted.labels == truth.labels))


def ensemble_score(alpha_c: float, alpha_cr: float) -> EnsembleScore:
    for name, value in (("alpha_c", alpha_c), ("alpha_cr", alpha_cr)):
        if not 0.0 <= value <= 1.0:
            raise RangeError(f"{name} = {value} outside [0, 1]")
    return EnsembleScore(1.0 - abs(alpha_c - alpha_cr), float(alpha_c), float(alpha_cr))


def assign_pseudo_labels(probs: ProbabilityMatrix) -> LabelVector:
    """Row-wise argmax; ties go to the smallest label index."""
    return LabelVector(np.argmax(probs.rows, axis=1), probs.K)


def score_ensembles(forward: EnsemblePredictions, reverse: EnsemblePredictions,
                    forward_truth: LabelVector = None, reverse_truth: LabelVector = None) -> EnsembleScore:
    """Vote each ensemble, compare with its truth labels and combine into ES."""
    alphas = []
    for preds, truth in ((forward, forward_truth), (reverse, reverse_truth)):
        truth = truth if truth is not None else preds.truth
        if truth is None:
            raise ConfigError(f"{preds.direction} ensemble has no truth labels")
        alphas.append(ensemble_accuracy(majority_vote(preds), truth))
    return ensemble_score(*alphas)


def read_ensemble_manifest(path, K: int = 10) -> EnsemblePredictions:
    """Read ``{"direction", "members": [csv ...], "truth": labels?}``.

    Members may be plain paths or ``{"path": ..., "classifier_id": ...}``.
    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("members"), list):
        raise FormatError(f"{path}: manifest needs a 'members' list")
    base = path.parent
    members, ids = [], []
    for entry in doc["members"]:
        if isinstance(entry, dict):
            member_path, cid = entry["path"], entry.get("classifier_id")
        else:
            member_path, cid = entry, None
        probs = read_probability_matrix(base / member_path, cid)
        members.append(probs)
        ids.append(probs.classifier_id)
    truth = read_labels(base / doc["truth"], K) if doc.get("truth") else None
    return EnsemblePredictions(tuple(members), doc.get("direction", "forward"), tuple(ids), truth)


def write_ensemble_manifest(path, direction: str, members: Sequence[str], truth: Optional[str] = None) -> None:
    doc = {"direction": direction, "members": list(members)}
    if truth is not None:
        doc["truth"] = truth
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def circularity_warnings(pseudo_label_source: Optional[str], *ensembles: EnsemblePredictions) -> List[str]:
    """Warn when the pseudo-labelling classifier also sits in an ensemble."""
    if not pseudo_label_source:
        return []
    out = []
    for ens in ensembles:
        if ens is not None and pseudo_label_source in ens.member_ids:
            out.append(
                f"pseudo-labels come from classifier {pseudo_label_source!r}, which is also a "
                f"member of the {ens.direction} ensemble; ES may be inflated"
            )
    return out
