"""Bernoulli RBM and greedy DBN feature extractors.

The standalone RBM is trained with persistent contrastive divergence (one
Gibbs step per update, one persistent chain per batch slot); DBN layers are
trained with plain CD-k on the previous layer's hidden probabilities.
Training is fully determined by the configured seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .errors import FormatError, IntractableError, RangeError, ShapeError
from .ingest import ImageSet

logger = logging.getLogger(__name__)

MAX_ENUMERATION_UNITS = 20
INIT_STD = 0.01


@dataclass(frozen=True)
class RbmParameters:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64)
        b = np.array(self.visible_bias, dtype=np.float64).reshape(-1)
        c = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        if W.ndim != 2 or W.shape != (b.size, c.size):
            raise ShapeError(
                f"weights {W.shape} inconsistent with biases ({b.size}, {c.size})"
            )
        for name, arr in (("weights", W), ("visible_bias", b), ("hidden_bias", c)):
            if not np.all(np.isfinite(arr)):
                raise RangeError(f"{name} contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", c)

    @property
    def V(self) -> int:
        return self.weights.shape[0]

    @property
    def H(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, V: int, H: int) -> "RbmParameters":
        return cls(np.zeros((V, H)), np.zeros(V), np.zeros(H))


@dataclass(frozen=True)
class DbnParameters:
    layers: Tuple[RbmParameters, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a DBN needs at least one layer")
        for lower, upper in zip(layers, layers[1:]):
            if lower.H != upper.V:
                raise ShapeError(
                    f"layer hidden size {lower.H} does not match next visible size {upper.V}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def layer_sizes(self) -> List[int]:
        return [layer.H for layer in self.layers]

    @property
    def V(self) -> int:
        return self.layers[0].V


@dataclass(frozen=True)
class TrainingTrace:
    """Per-iteration (RBM) or per-epoch (DBN layers) training diagnostics.

    For a DBN, ``layer[i]`` gives the layer that produced ``values[i]``.
    """

    kind: str
    values: Tuple[float, ...]
    seed: int
    layer: Tuple[int, ...] = ()

    def for_layer(self, index: int) -> List[float]:
        return [v for v, l in zip(self.values, self.layer) if l == index]


@dataclass
class RbmConfig:
    n_components: int = 100
    batch_size: int = 10
    learning_rate: float = 0.06
    n_iter: int = 10
    seed: int = 0
    holdout_fraction: float = 0.1
    max_holdout: int = 1000


@dataclass
class DbnConfig:
    layer_sizes: Sequence[int] = (256, 512)
    batch_size: int = 10
    learning_rate: float = 0.06
    epochs: int = 10
    cd_steps: int = 1
    seed: int = 0


# --------------------------------------------------------------------------
# energy / exact probabilities


def _as_state(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1:] != (n,):
        raise ShapeError(f"{name} has length {arr.shape[-1] if arr.ndim else 0}, expected {n}")
    return arr


def rbm_energy(params: RbmParameters, v, h) -> float:
    """E(v, h) = -v^T W h - b^T v - c^T h."""
    v = _as_state(v, params.V, "v")
    h = _as_state(h, params.H, "h")
    if v.ndim != 1 or h.ndim != 1:
        raise ShapeError("v and h must be vectors")
    return float(-(v @ params.weights @ h) - params.visible_bias @ v - params.hidden_bias @ h)


def binary_states(n: int) -> np.ndarray:
    """All 2**n binary vectors of length n, in counting order."""
    idx = np.arange(2**n)[:, None]
    return ((idx >> np.arange(n - 1, -1, -1)) & 1).astype(np.float64)


def _energy_table(params: RbmParameters) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if params.V + params.H > MAX_ENUMERATION_UNITS:
        raise IntractableError(
            f"V + H = {params.V + params.H} exceeds {MAX_ENUMERATION_UNITS} for exact enumeration"
        )
    vs = binary_states(params.V)
    hs = binary_states(params.H)
    E = -(vs @ params.weights @ hs.T) - (vs @ params.visible_bias)[:, None] - (hs @ params.hidden_bias)[None, :]
    return vs, hs, E


def log_partition(params: RbmParameters) -> float:
    _, _, E = _energy_table(params)
    return float(logsumexp(-E))


def rbm_joint_probability(params: RbmParameters, v, h) -> float:
    """Exact P(v, h) = exp(-E(v, h)) / Z, with Z summed over every state."""
    v = _as_state(v, params.V, "v")
    h = _as_state(h, params.H, "h")
    log_z = log_partition(params)
    return float(np.exp(-rbm_energy(params, v, h) - log_z))


def joint_probability_table(params: RbmParameters) -> np.ndarray:
    """P(v, h) for every state; rows follow ``binary_states(V)``, columns ``binary_states(H)``."""
    _, _, E = _energy_table(params)
    return np.exp(-E - logsumexp(-E))


def free_energy(params: RbmParameters, v) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    return -(v @ params.visible_bias) - np.logaddexp(0.0, v @ params.weights + params.hidden_bias).sum(axis=1)


def pseudo_likelihood(params: RbmParameters, v, flip_index=None, rng=None) -> float:
    """Mean per-unit conditional log-probability ``log P(v_r | v_-r)``.

    One unit per sample is examined, chosen by ``flip_index`` (or drawn from
    ``rng``).  ``v`` should be binary for the quantity to be exact.
    """
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if flip_index is None:
        rng = np.random.default_rng(rng)
        flip_index = rng.integers(0, params.V, size=v.shape[0])
    flipped = v.copy()
    rows = np.arange(v.shape[0])
    flipped[rows, flip_index] = 1.0 - flipped[rows, flip_index]
    return float(log_expit(free_energy(params, flipped) - free_energy(params, v)).mean())


# --------------------------------------------------------------------------
# training


class _Rbm:
    """Mutable working copy of RBM parameters used during training."""

    def __init__(self, W, b, c):
        self.W = np.array(W, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.c = np.array(c, dtype=np.float64)

    @classmethod
    def init(cls, V, H, rng):
        return cls(rng.normal(0.0, INIT_STD, size=(V, H)), np.zeros(V), np.zeros(H))

    @classmethod
    def from_params(cls, params: RbmParameters):
        return cls(params.weights, params.visible_bias, params.hidden_bias)

    def freeze(self) -> RbmParameters:
        return RbmParameters(self.W.copy(), self.b.copy(), self.c.copy())

    def hidden_probs(self, v):
        return expit(v @ self.W + self.c)

    def visible_probs(self, h):
        return expit(h @ self.W.T + self.b)

    def apply(self, grads, lr):
        dW, db, dc = grads
        self.W += lr * dW
        self.b += lr * db
        self.c += lr * dc


def _sample(p, rng):
    return (rng.random(p.shape) < p).astype(np.float64)


def _stats(v_pos, h_pos, v_neg, h_neg):
    dW = v_pos.T @ h_pos / v_pos.shape[0] - v_neg.T @ h_neg / v_neg.shape[0]
    return dW, v_pos.mean(axis=0) - v_neg.mean(axis=0), h_pos.mean(axis=0) - h_neg.mean(axis=0)


def pcd_gradient(model, batch, chain, rng):
    """One PCD-1 gradient estimate and the advanced persistent chain.

    ``model`` may be an :class:`RbmParameters` or the internal trainer.
    ``chain`` holds binary hidden states of the persistent particles.
    Returns ``((dW, db, dc), new_chain)``; the gradient is an ascent
    direction on the log-likelihood.
    """
    if isinstance(model, RbmParameters):
        model = _Rbm.from_params(model)
    h_pos = model.hidden_probs(batch)
    v_neg = _sample(model.visible_probs(chain), rng)
    h_neg = model.hidden_probs(v_neg)
    return _stats(batch, h_pos, v_neg, h_neg), _sample(h_neg, rng)


def cd_gradient(model, batch, rng, steps: int = 1):
    """CD-k gradient estimate started at the data; returns (grads, reconstruction)."""
    if isinstance(model, RbmParameters):
        model = _Rbm.from_params(model)
    h_pos = model.hidden_probs(batch)
    h = _sample(h_pos, rng)
    for step in range(steps):
        v_neg = model.visible_probs(h)
        h_neg = model.hidden_probs(v_neg)
        if step < steps - 1:
            h = _sample(h_neg, rng)
    return _stats(batch, h_pos, v_neg, h_neg), v_neg


def _as_rows(data, V=None) -> np.ndarray:
    if isinstance(data, ImageSet):
        X = data.flattened()
    else:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim == 3:
            X = X.reshape(X.shape[0], -1)
    if X.ndim != 2:
        raise ShapeError(f"expected (N, V) data, got shape {X.shape}")
    if V is not None and X.shape[1] != V:
        raise ShapeError(f"data has {X.shape[1]} visible units, model expects {V}")
    return X


def _training_rows(data, V=None) -> np.ndarray:
    X = _as_rows(data, V)
    if X.shape[0] == 0:
        raise ShapeError("no training rows")
    if not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0:
        raise RangeError("training data must lie in [0, 1]")
    return X


def train_rbm(data, config: RbmConfig = None, init: RbmParameters = None):
    """Train a Bernoulli RBM with PCD-1.

    A seeded slice of the data (``holdout_fraction``, capped at
    ``max_holdout`` rows) is held out and binarised at 0.5; after every
    iteration the trace records the mean pseudo-likelihood on it, using one
    fixed unit per sample so successive values are comparable.

    Returns ``(RbmParameters, TrainingTrace)``.
    """
    config = config or RbmConfig()
    X = _training_rows(data, init.V if init is not None else None)
    rng = np.random.default_rng(config.seed)
    N, V = X.shape

    n_hold = min(config.max_holdout, int(round(N * config.holdout_fraction)))
    if N - n_hold < 1:
        n_hold = 0
    perm = rng.permutation(N)
    train = X[perm[n_hold:]]
    held = X[perm[:n_hold]] if n_hold else train[: min(len(train), config.max_holdout)]
    held = (held >= 0.5).astype(np.float64)
    flip = rng.integers(0, V, size=held.shape[0])

    if init is not None:
        if init.H != config.n_components:
            raise ShapeError(f"initial parameters have {init.H} hidden units, config asks {config.n_components}")
        model = _Rbm.from_params(init)
    else:
        model = _Rbm.init(V, config.n_components, rng)
    chain = np.zeros((config.batch_size, config.n_components))

    trace = []
    for it in range(config.n_iter):
        order = rng.permutation(train.shape[0])
        for start in range(0, train.shape[0], config.batch_size):
            batch = train[order[start : start + config.batch_size]]
            grads, chain = pcd_gradient(model, batch, chain, rng)
            model.apply(grads, config.learning_rate)
        pl = pseudo_likelihood(model.freeze(), held, flip)
        trace.append(pl)
        logger.debug("rbm iteration %d pseudo-likelihood %.5f", it + 1, pl)

    return model.freeze(), TrainingTrace("pseudo_likelihood", tuple(trace), config.seed)


def reconstruction_error(params: RbmParameters, v) -> float:
    """Mean squared error of a mean-field visible->hidden->visible pass."""
    model = _Rbm.from_params(params)
    return float(np.mean((v - model.visible_probs(model.hidden_probs(v))) ** 2))


def train_dbn(data, config: DbnConfig = None):
    """Greedy layer-wise DBN training with CD-k.

    Each layer is an RBM trained for ``epochs`` passes on the hidden
    activation probabilities of the layer below.  The trace holds the
    reconstruction error of every layer after each of its epochs.
    """
    config = config or DbnConfig()
    X = _training_rows(data)
    sizes = [int(s) for s in config.layer_sizes]
    if not sizes or min(sizes) < 1:
        raise ShapeError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(config.seed)

    layers, values, owner = [], [], []
    inputs = X
    for index, H in enumerate(sizes):
        model = _Rbm.init(inputs.shape[1], H, rng)
        for epoch in range(config.epochs):
            order = rng.permutation(inputs.shape[0])
            for start in range(0, inputs.shape[0], config.batch_size):
                batch = inputs[order[start : start + config.batch_size]]
                grads, _ = cd_gradient(model, batch, rng, config.cd_steps)
                model.apply(grads, config.learning_rate)
            err = reconstruction_error(model.freeze(), inputs)
            values.append(err)
            owner.append(index)
            logger.debug("dbn layer %d epoch %d reconstruction error %.6f", index + 1, epoch + 1, err)
        params = model.freeze()
        layers.append(params)
        inputs = model.hidden_probs(inputs)

    trace = TrainingTrace("reconstruction_error", tuple(values), config.seed, tuple(owner))
    return DbnParameters(tuple(layers)), trace


def transform(params: Union[RbmParameters, DbnParameters], data) -> np.ndarray:
    """Hidden activation probabilities, propagated through every DBN layer."""
    layers = params.layers if isinstance(params, DbnParameters) else (params,)
    out = _as_rows(data, layers[0].V)
    for layer in layers:
        out = expit(out @ layer.weights + layer.hidden_bias)
    return out


# --------------------------------------------------------------------------
# checkpoints


def _layer_doc(p: RbmParameters) -> dict:
    return {
        "weights": p.weights.tolist(),
        "visible_bias": p.visible_bias.tolist(),
        "hidden_bias": p.hidden_bias.tolist(),
    }


def save_checkpoint(path, params, seed: int = 0) -> None:
    """Write parameters as JSON (floats printed with round-trip precision)."""
    layers = params.layers if isinstance(params, DbnParameters) else (params,)
    doc = {
        "kind": "dbn" if isinstance(params, DbnParameters) else "rbm",
        "seed": int(seed),
        "layer_sizes": [layers[0].V] + [layer.H for layer in layers],
        "layers": [_layer_doc(layer) for layer in layers],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Read a checkpoint; returns ``(params, seed)``."""
    try:
        doc = json.loads(Path(path).read_text())
        layers = tuple(
            RbmParameters(l["weights"], l["visible_bias"], l["hidden_bias"]) for l in doc["layers"]
        )
        kind = doc["kind"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from exc
    sizes = [layers[0].V] + [layer.H for layer in layers]
    if doc.get("layer_sizes", sizes) != sizes:
        raise FormatError(f"{path}: layer_sizes {doc['layer_sizes']} disagree with weights {sizes}")
    if kind == "rbm":
        if len(layers) != 1:
            raise FormatError(f"{path}: rbm checkpoint must hold exactly one layer")
        return layers[0], int(doc.get("seed", 0))
    if kind == "dbn":
        return DbnParameters(layers), int(doc.get("seed", 0))
    raise FormatError(f"{path}: unknown checkpoint kind {kind!r}")
