"""Small feed-forward classifier with exact per-example gradients.

Deliberately minimal: dense layers with ReLU between them, logits out,
softmax cross-entropy loss, float64 everywhere.  Per-example gradients are
computed by batched backpropagation (no loops over examples), which is what
the gradient-clipping step of DP-SGD needs.
"""

from __future__ import annotations

import json
import math
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DomainError, ParseError

CHECKPOINT_MAGIC = "dpbudget-mlp 1"


class MlpModel:
    """Dense ReLU network; the final layer emits raw logits."""

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise DomainError("weights and biases must be nonempty and aligned")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise DomainError(f"layer {i} has inconsistent shapes {w.shape} / {b.shape}")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise DomainError(f"layer {i} does not chain with layer {i - 1}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def init(cls, layer_sizes: Sequence[int], seed: int) -> "MlpModel":
        """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
        if len(layer_sizes) < 2:
            raise DomainError("need at least an input and an output size")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _forward_trace(model: MlpModel, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Pre-activations and activations for a batch; ReLU'(0) is taken as 0."""
    h = x
    pre, act = [], [x]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        act.append(h)
    return pre, act


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Logits for a single feature vector or a batch (rows = examples)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.weights[0].shape[0]:
        raise DomainError(
            f"input dimension {x.shape[1]} does not match model fan-in {model.weights[0].shape[0]}"
        )
    logits = _forward_trace(model, x)[1][-1]
    return logits[0] if single else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example softmax cross-entropy."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return log_z - shifted[np.arange(len(labels)), labels]


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, np.atleast_2d(np.asarray(x, dtype=np.float64))), axis=1)


def accuracy(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(model, x) == labels))


def per_example_gradients(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> List[np.ndarray]:
    """Exact per-example gradients of the softmax cross-entropy loss.

    Returns one array per parameter in the order (W0, b0, W1, b1, ...), each
    with a leading batch axis.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.atleast_1d(labels)
    if len(x) == 0:
        raise DomainError("per-example gradients require a nonempty batch")
    if x.shape[1] != model.weights[0].shape[0]:
        raise DomainError(
            f"input dimension {x.shape[1]} does not match model fan-in {model.weights[0].shape[0]}"
        )
    n = len(x)
    pre, act = _forward_trace(model, x)
    delta = softmax(act[-1])
    delta[np.arange(n), labels] -= 1.0

    grads: List[np.ndarray] = [np.empty(0)] * (2 * len(model.weights))
    for layer in range(len(model.weights) - 1, -1, -1):
        grads[2 * layer] = act[layer][:, :, None] * delta[:, None, :]
        grads[2 * layer + 1] = delta
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0.0)
    return grads


def mean_gradients(per_example: List[np.ndarray]) -> List[np.ndarray]:
    """Fixed-order mean over the batch axis (matches the whole-batch gradient)."""
    return [g.mean(axis=0) for g in per_example]


def flatten_per_example(per_example: List[np.ndarray]) -> np.ndarray:
    """Stack per-example gradients into an (n_examples, n_params) matrix."""
    n = per_example[0].shape[0]
    return np.concatenate([g.reshape(n, -1) for g in per_example], axis=1)


def unflatten_gradient(model: MlpModel, vector: np.ndarray) -> List[np.ndarray]:
    """Split a flat parameter-space vector back into (W, b) shaped arrays."""
    if vector.size != model.n_params:
        raise DomainError(f"vector has {vector.size} entries, model has {model.n_params} parameters")
    out: List[np.ndarray] = []
    offset = 0
    for w, b in zip(model.weights, model.biases):
        out.append(vector[offset:offset + w.size].reshape(w.shape))
        offset += w.size
        out.append(vector[offset:offset + b.size].reshape(b.shape))
        offset += b.size
    return out


def sgd_step(model: MlpModel, gradients: List[np.ndarray], eta: float) -> MlpModel:
    """In-place update theta <- theta - eta * gradient; returns the model."""
    if len(gradients) != 2 * len(model.weights):
        raise DomainError("gradient list does not match the model's parameter list")
    for i in range(len(model.weights)):
        model.weights[i] -= eta * gradients[2 * i]
        model.biases[i] -= eta * gradients[2 * i + 1]
    return model


def save_checkpoint(model: MlpModel, path: str) -> None:
    """Versioned header + JSON layer sizes + row-major float64 parameters."""
    header = json.dumps({"layer_sizes": model.layer_sizes})
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC.encode() + b"\n")
        fh.write(header.encode() + b"\n")
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w).tobytes())
            fh.write(np.ascontiguousarray(b).tobytes())


def load_checkpoint(path: str) -> MlpModel:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(f"not a model checkpoint (header {magic!r})", line=1)
        try:
            sizes = json.loads(fh.readline().decode())["layer_sizes"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"bad checkpoint metadata: {exc}", line=2) from exc
        blob = fh.read()
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype=np.float64, count=fan_in * fan_out, offset=offset)
        offset += w.nbytes
        b = np.frombuffer(blob, dtype=np.float64, count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(blob):
        raise ParseError("checkpoint payload does not match the declared shapes")
    return MlpModel(weights, biases)
