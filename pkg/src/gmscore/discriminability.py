"""Logistic classification over latent features, and classification metrics.

The classifier is multinomial logistic regression with an L2 penalty on the
weights (not the intercept), fitted by a truncated Newton method: conjugate
gradient on Hessian-vector products for the step, Armijo backtracking for
the step length.  The objective is the mean cross-entropy plus
``||W||^2 / (2 C N)``, which has the same minimiser as the summed form
``sum(CE) + ||W||^2 / (2 C)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DegenerateData, FormatError, PairingError, RangeError, ShapeError
from .ingest import LabelVector, ProbabilityMatrix

logger = logging.getLogger(__name__)

EXTRACTORS = ("DBN", "RBM")


@dataclass
class LogisticConfig:
    C: float = 6000.0
    max_iter: int = 100
    tol: float = 1e-4
    max_cg: int = 200


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (F, K)
    bias: np.ndarray  # (K,)
    l2_strength: float
    n_iter: int = 0
    converged: bool = False
    loss_history: tuple = ()

    @property
    def F(self) -> int:
        return self.weights.shape[0]

    @property
    def K(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, F: int, K: int, l2_strength: float = 1.0 / 6000.0):
        return cls(np.zeros((F, K)), np.zeros(K), l2_strength)


class _Objective:
    """Penalised mean cross-entropy over a flat parameter vector ``[W.ravel(), b]``."""

    def __init__(self, X, y, K, lam):
        self.X = X
        self.N, self.F = X.shape
        self.K = K
        self.lam = lam
        self.Y = np.zeros((self.N, K))
        self.Y[np.arange(self.N), y] = 1.0
        self._cache_key = None

    def unpack(self, theta):
        W = theta[: self.F * self.K].reshape(self.F, self.K)
        return W, theta[self.F * self.K :]

    def _forward(self, theta):
        if self._cache_key is not None and np.array_equal(self._cache_key, theta):
            return self._cache
        W, b = self.unpack(theta)
        Z = self.X @ W + b
        lse = logsumexp(Z, axis=1)
        P = np.exp(Z - lse[:, None])
        self._cache_key = theta.copy()
        self._cache = (W, Z, lse, P)
        return self._cache

    def loss(self, theta):
        W, Z, lse, _ = self._forward(theta)
        ce = np.mean(lse - (Z * self.Y).sum(axis=1))
        return float(ce + 0.5 * self.lam * np.sum(W * W))

    def grad(self, theta):
        W, _, _, P = self._forward(theta)
        R = (P - self.Y) / self.N
        gW = self.X.T @ R + self.lam * W
        return np.concatenate([gW.ravel(), R.sum(axis=0)])

    def hessp(self, theta, d):
        W, _, _, P = self._forward(theta)
        dW, db = self.unpack(d)
        A = self.X @ dW + db
        R = P * (A - (P * A).sum(axis=1, keepdims=True)) / self.N
        hW = self.X.T @ R + self.lam * dW
        return np.concatenate([hW.ravel(), R.sum(axis=0)])


def _truncated_cg(hessp, g, max_iter, tol):
    """Approximately solve H p = -g; stops at tolerance or negative curvature."""
    p = np.zeros_like(g)
    r = -g.copy()
    d = r.copy()
    rr = r @ r
    for _ in range(max_iter):
        if np.sqrt(rr) <= tol:
            break
        Hd = hessp(d)
        curv = d @ Hd
        if curv <= 0:
            if not p.any():
                p = -g
            break
        alpha = rr / curv
        p += alpha * d
        r -= alpha * Hd
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
    return p


def newton_cg(obj: _Objective, theta, max_iter=100, tol=1e-4, max_cg=200):
    """Minimise ``obj`` from ``theta``; converged when ``max|grad| <= tol``.

    Returns ``(theta, n_steps, converged, loss_history)``.  Every accepted
    step satisfies the Armijo condition, so the history is non-increasing.
    """
    f = obj.loss(theta)
    history = [f]
    steps = 0
    while True:
        g = obj.grad(theta)
        if np.max(np.abs(g)) <= tol:
            return theta, steps, True, history
        if steps >= max_iter:
            return theta, steps, False, history
        gnorm = np.linalg.norm(g)
        p = _truncated_cg(lambda d: obj.hessp(theta, d), g, max_cg, min(0.5, np.sqrt(gnorm)) * gnorm)
        slope = g @ p
        if slope >= 0:
            p, slope = -g, -(g @ g)
        step = 1.0
        while step >= 1e-10:
            cand = theta + step * p
            f_new = obj.loss(cand)
            if f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            logger.debug("line search stalled after %d steps", steps)
            return theta, steps, False, history
        theta, f = cand, f_new
        history.append(f)
        steps += 1


def _feature_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"features must be (N, F), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise RangeError("features must be finite")
    return X


def train_logistic(features, labels: LabelVector, config: LogisticConfig = None) -> LogisticModel:
    """Fit multinomial logistic regression (L2, ``C`` = 6000 by default)."""
    config = config or LogisticConfig()
    X = _feature_matrix(features)
    labels.check_pairs(X.shape[0], "feature rows")
    if np.unique(labels.labels).size < 2:
        raise DegenerateData("training labels contain a single class")
    K = max(labels.K, 2)
    lam = 1.0 / (config.C * X.shape[0])
    obj = _Objective(X, labels.labels, K, lam)
    theta0 = np.zeros(X.shape[1] * K + K)
    theta, n_iter, converged, history = newton_cg(
        obj, theta0, config.max_iter, config.tol, config.max_cg
    )
    if not converged:
        logger.info("logistic solver stopped after %d iterations without reaching tol", n_iter)
    W, b = obj.unpack(theta)
    return LogisticModel(W.copy(), b.copy(), 1.0 / config.C, n_iter, bool(converged), tuple(history))


def logistic_objective(model_or_theta, features, labels: LabelVector, C: float = 6000.0):
    """The training objective and its gradient, for diagnostics and checks."""
    X = _feature_matrix(features)
    K = labels.K
    obj = _Objective(X, labels.labels, K, 1.0 / (C * X.shape[0]))
    if isinstance(model_or_theta, LogisticModel):
        theta = np.concatenate([model_or_theta.weights.ravel(), model_or_theta.bias])
    else:
        theta = np.asarray(model_or_theta, dtype=np.float64)
    return obj.loss(theta), obj.grad(theta), obj


def predict_proba(model: LogisticModel, features, classifier_id: str = "logistic") -> ProbabilityMatrix:
    X = _feature_matrix(features)
    if X.shape[1] != model.F:
        raise ShapeError(f"features have {X.shape[1]} columns, model expects {model.F}")
    return ProbabilityMatrix(softmax(X @ model.weights + model.bias, axis=1), classifier_id)


def predict(model: LogisticModel, features) -> LabelVector:
    probs = predict_proba(model, features)
    return LabelVector(np.argmax(probs.rows, axis=1), model.K)


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class DiscriminabilityMetrics:
    per_class: tuple
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    extractor_id: str = ""
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("macro_precision", "macro_recall", "macro_f1", "accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise RangeError(f"{name} = {value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "extractor_id": self.extractor_id,
            "per_class": [
                {"class": i, "precision": m.precision, "recall": m.recall, "f1": m.f1}
                for i, m in enumerate(self.per_class)
            ],
            "avg": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "accuracy": self.accuracy,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscriminabilityMetrics":
        try:
            per_class = tuple(
                ClassMetrics(float(r["precision"]), float(r["recall"]), float(r["f1"]))
                for r in doc.get("per_class", [])
            )
            avg = doc["avg"]
            return cls(
                per_class,
                float(avg["precision"]),
                float(avg["recall"]),
                float(avg["f1"]),
                float(doc["accuracy"]),
                str(doc.get("extractor_id", "")),
                list(doc.get("warnings", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed metrics document ({exc})") from exc


def confusion_matrix(predicted, truth, K: int) -> np.ndarray:
    """``M[t, p]`` counts samples of true class t predicted as p."""
    return np.bincount(truth * K + predicted, minlength=K * K).reshape(K, K)


def classification_metrics(predicted, truth, K: Optional[int] = None, extractor_id: str = "") -> DiscriminabilityMetrics:
    """One-vs-rest precision/recall/F1 per class, macro averages, accuracy.

    Zero denominators give 0.  A class that appears in neither vector
    scores 0 on all three and is reported in ``warnings``.
    """
    if K is None:
        K = max(getattr(predicted, "K", 0), getattr(truth, "K", 0)) or None
    p = np.asarray(getattr(predicted, "labels", predicted), dtype=np.int64)
    t = np.asarray(getattr(truth, "labels", truth), dtype=np.int64)
    if p.shape != t.shape:
        raise PairingError(f"{p.size} predictions for {t.size} truth labels")
    if t.size == 0:
        raise PairingError("metrics need at least one sample")
    if K is None:
        K = int(max(p.max(), t.max())) + 1
    M = confusion_matrix(p, t, K)
    tp = np.diag(M).astype(np.float64)
    pred_tot = M.sum(axis=0)
    true_tot = M.sum(axis=1)
    prec = np.divide(tp, pred_tot, out=np.zeros(K), where=pred_tot > 0)
    rec = np.divide(tp, true_tot, out=np.zeros(K), where=true_tot > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(K), where=denom > 0)

    warnings = [
        f"class {i}: absent from both predictions and truth; metrics set to 0"
        for i in np.flatnonzero((pred_tot == 0) & (true_tot == 0))
    ]
    per_class = tuple(ClassMetrics(float(a), float(b), float(c)) for a, b, c in zip(prec, rec, f1))
    return DiscriminabilityMetrics(
        per_class,
        float(prec.mean()),
        float(rec.mean()),
        float(f1.mean()),
        float(tp.sum() / t.size),
        extractor_id,
        warnings,
    )


def extractor_average(dbn: DiscriminabilityMetrics, rbm: DiscriminabilityMetrics) -> float:
    """Mean of macro F1, precision, recall and accuracy across both extractors."""
    values = [
        m_value
        for m in (dbn, rbm)
        for m_value in (m.macro_f1, m.macro_precision, m.macro_recall, m.accuracy)
    ]
    return float(np.mean(values))


def write_metrics(path, metrics: DiscriminabilityMetrics) -> None:
    Path(path).write_text(json.dumps(metrics.to_dict(), sort_keys=True, indent=2) + "\n")


def read_metrics(path) -> DiscriminabilityMetrics:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return DiscriminabilityMetrics.from_dict(doc)
