"""Dense embedder, triplet and softmax losses with analytic gradients, Adagrad.

The embedder is a fully connected net n -> h1 -> ... -> d with tanh on the
hidden layers and a linear final layer whose output is L2-normalized; tanh
keeps every path smooth so finite-difference oracles can be tight.
Everything runs in float64.

Checkpoint format (little-endian, documented for bit-exact round trips):

    bytes 0..3   magic b"TMCK"
    uint32       version (1)
    uint32       L, the number of layer sizes
    uint32[L]    layer sizes n, h1, ..., d
    then per layer l: float64 weights, row-major, shape (sizes[l], sizes[l+1]),
    followed by float64 biases of length sizes[l+1].
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import l2_normalize

_MAGIC = b"TMCK"
_VERSION = 1

ADAGRAD_EPSILON = 1e-8


@dataclass
class EmbedderParams:
    """Weights and biases of the dense embedder; weights[l] has shape (in, out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: weight/bias shapes {w.shape}/{b.shape} disagree")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f"layer {l}: input dim does not match previous output dim")

    @classmethod
    def initialize(cls, layer_sizes: tuple[int, ...], rng: np.random.Generator) -> "EmbedderParams":
        """He-style fan-in init: W ~ N(0, 2/fan_in), zero biases."""
        if len(layer_sizes) < 2:
            raise ValueError("need at least an input and an output size")
        weights = [
            rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:])
        ]
        biases = [np.zeros(fan_out) for fan_out in layer_sizes[1:]]
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a stable order (for the optimizer)."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "EmbedderParams":
        return EmbedderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardCache:
    """Intermediates from embed_forward needed by embed_backward."""

    layer_sizes: tuple[int, ...]
    activations: list[np.ndarray]  # [inputs, tanh outputs of each hidden layer]
    pre_norm: np.ndarray
    norms: np.ndarray
    features: np.ndarray


def embed_forward(params: EmbedderParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Map inputs to L2-normalized features; cache intermediates for backward."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ValueError(
            f"inputs of shape {x.shape} do not match embedder input dim {params.layer_sizes[0]}"
        )
    activations = [x]
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        x = np.tanh(x @ w + b)
        activations.append(x)
    pre_norm = x @ params.weights[-1] + params.biases[-1]
    features = l2_normalize(pre_norm)
    norms = np.linalg.norm(pre_norm, axis=1)
    return features, ForwardCache(params.layer_sizes, activations, pre_norm, norms, features)


def embed_backward(
    params: EmbedderParams, cache: ForwardCache, grad_features: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backprop feature gradients to (weight grads, bias grads).

    The normalization Jacobian (I - f f^T)/||z|| zeroes the gradient
    component parallel to each feature row.
    """
    if cache.layer_sizes != params.layer_sizes:
        raise ValueError("forward cache does not match these parameters")
    g = np.asarray(grad_features, dtype=np.float64)
    if g.shape != cache.features.shape:
        raise ValueError(f"grad_features shape {g.shape} != features shape {cache.features.shape}")
    f = cache.features
    delta = (g - f * np.sum(f * g, axis=1, keepdims=True)) / cache.norms[:, None]
    grad_w: list[np.ndarray] = [np.empty(0)] * len(params.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(params.biases)
    for l in range(len(params.weights) - 1, -1, -1):
        a = cache.activations[l]
        grad_w[l] = a.T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ params.weights[l].T) * (1.0 - a * a)
    return grad_w, grad_b


@dataclass
class TripletLossResult:
    total: float
    per_triplet: np.ndarray
    active_count: int


def _check_triplets(features: np.ndarray, triplets: np.ndarray) -> np.ndarray:
    t = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if t.size and (t.min() < 0 or t.max() >= features.shape[0]):
        raise IndexError("triplet index outside feature matrix")
    return t


def triplet_loss(features: np.ndarray, triplets: np.ndarray, margin: float) -> TripletLossResult:
    """Mean over triplets of max(0, ||f_a - f_p||^2 + margin - ||f_a - f_n||^2)."""
    f = np.asarray(features, dtype=np.float64)
    t = _check_triplets(f, triplets)
    if t.shape[0] == 0:
        return TripletLossResult(0.0, np.zeros(0), 0)
    d_ap = np.sum((f[t[:, 0]] - f[t[:, 1]]) ** 2, axis=1)
    d_an = np.sum((f[t[:, 0]] - f[t[:, 2]]) ** 2, axis=1)
    per = np.maximum(0.0, d_ap + margin - d_an)
    return TripletLossResult(float(per.mean()), per, int(np.count_nonzero(per > 0)))


def triplet_loss_backward(features: np.ndarray, triplets: np.ndarray, margin: float) -> np.ndarray:
    """Gradient of triplet_loss().total with respect to the features.

    Each strictly active triplet contributes 2(f_n - f_p)/T to its anchor,
    2(f_p - f_a)/T to its positive and 2(f_a - f_n)/T to its negative,
    where T is the number of triplets in the list.
    """
    f = np.asarray(features, dtype=np.float64)
    t = _check_triplets(f, triplets)
    grad = np.zeros_like(f)
    if t.shape[0] == 0:
        return grad
    fa, fp, fn = f[t[:, 0]], f[t[:, 1]], f[t[:, 2]]
    active = (np.sum((fa - fp) ** 2, axis=1) + margin - np.sum((fa - fn) ** 2, axis=1)) > 0
    if not np.any(active):
        return grad
    scale = 2.0 / t.shape[0]
    a, p, n = t[active, 0], t[active, 1], t[active, 2]
    np.add.at(grad, a, scale * (fn[active] - fp[active]))
    np.add.at(grad, p, scale * (fp[active] - fa[active]))
    np.add.at(grad, n, scale * (fa[active] - fn[active]))
    return grad


@dataclass
class SoftmaxHead:
    """Linear classification head over C identities, used for pretraining."""

    weight: np.ndarray  # (d, C)
    bias: np.ndarray  # (C,)

    @classmethod
    def initialize(cls, dim: int, classes: int, rng: np.random.Generator) -> "SoftmaxHead":
        return cls(rng.standard_normal((dim, classes)) * np.sqrt(2.0 / dim), np.zeros(classes))

    def arrays(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weight + self.bias


def softmax_xent_forward_backward(
    head: SoftmaxHead, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Mean cross-entropy and gradients w.r.t. features, head weight, head bias."""
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = head.bias.shape[0]
    if y.min(initial=0) < 0 or y.max(initial=-1) >= classes:
        raise IndexError(f"labels must lie in [0, {classes})")
    logits = head.logits(f)
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    batch = f.shape[0]
    loss = float(-np.log(probs[np.arange(batch), y]).mean())
    glogits = probs.copy()
    glogits[np.arange(batch), y] -= 1.0
    glogits /= batch
    return loss, glogits @ head.weight.T, f.T @ glogits, glogits.sum(axis=0)


@dataclass
class AdagradState:
    """Per-parameter squared-gradient accumulators plus step settings."""

    learning_rate: float
    epsilon: float = ADAGRAD_EPSILON
    accumulators: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_arrays(
        cls, arrays: list[np.ndarray], learning_rate: float, epsilon: float = ADAGRAD_EPSILON
    ) -> "AdagradState":
        return cls(learning_rate, epsilon, [np.zeros_like(a) for a in arrays])


def adagrad_step(state: AdagradState, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """In-place update: acc += g^2; param -= lr * g / (sqrt(acc) + eps)."""
    if len(arrays) != len(state.accumulators) or len(grads) != len(arrays):
        raise ValueError("parameter, gradient and accumulator lists must align")
    for acc, p, g in zip(state.accumulators, arrays, grads):
        if acc.shape != p.shape or g.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, acc {acc.shape}")
        acc += g * g
        p -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)


def save_checkpoint(params: EmbedderParams, path: str | Path) -> None:
    """Write the binary checkpoint described in the module docstring."""
    sizes = params.layer_sizes
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> EmbedderParams:
    """Read a checkpoint written by save_checkpoint, bit-exactly."""
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path} is not an embedder checkpoint")
    version, n_sizes = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, 12)
    offset = 12 + 4 * n_sizes
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(blob):
        raise ValueError(f"{path} has {len(blob) - offset} trailing bytes")
    return EmbedderParams(weights, biases)
