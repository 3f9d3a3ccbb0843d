"""Compact fully-connected classifiers with hand-rolled backprop and Adam.

The two receiver network families are fixed, small architectures: a
row/column classifier of the common stream (2 real inputs) and one of a
private stream after interference cancellation (2 + M_c inputs, where
M_c is the common stream's bits per symbol).  Output layers are softmax
over the 2**(M/2) row or column classes of the target constellation.

Complexity accounting matches the usual fully-connected conventions:
trainable parameters sum in*out + out per layer, and real
multiplications per classified symbol sum in*out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvalidModulationError

ACTIVATIONS = ("sigmoid", "relu", "softmax")

#: Hidden-layer width per target bits-per-symbol (common-stream detector).
COMMON_HIDDEN = {2: 10, 4: 15, 6: 20, 8: 25}

#: Hidden-layer width per target bits-per-symbol (cancellation + private detector).
IC_HIDDEN = {2: 20, 4: 25, 6: 30, 8: 35}

PURPOSES = ("common_detect", "ic_private_detect")

SERIAL_FORMAT_VERSION = 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    """Fully-connected network; weights are (out, in) row-major matrices."""

    def __init__(self, layer_sizes, activations, weights, biases):
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.activations = list(activations)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self._validate()

    def _validate(self):
        n_layers = len(self.layer_sizes) - 1
        if n_layers < 1:
            raise ContractError("network needs at least one layer")
        if len(self.activations) != n_layers:
            raise ContractError("one activation tag per non-input layer")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ContractError(f"unknown activation {act!r}")
        if self.activations[-1] != "softmax":
            raise ContractError("output layer must be softmax")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i + 1], self.layer_sizes[i]):
                raise ContractError(f"layer {i}: weight shape {w.shape} mismatch")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ContractError(f"layer {i}: bias shape {b.shape} mismatch")

    @classmethod
    def initialize(cls, layer_sizes, activations, rng: np.random.Generator) -> "Mlp":
        """Glorot-uniform weights on +-sqrt(6/(fan_in+fan_out)), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(layer_sizes, activations, weights, biases)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def _apply(self, act: str, z: np.ndarray) -> np.ndarray:
        if act == "sigmoid":
            return _sigmoid(z)
        if act == "relu":
            return np.maximum(z, 0.0)
        return _softmax(z)

    def forward(self, x) -> np.ndarray:
        """Class probability vector(s) for input(s) ``x``.

        Accepts one feature vector (input_size,) or a batch
        (n, input_size); the softmax output sums to one per sample.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.input_size:
            raise ContractError(
                f"input has size {a.shape[-1]}, network expects {self.input_size}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = self._apply(act, a @ w.T + b)
        return a[0] if single else a

    def loss_and_grad(self, features, targets_onehot):
        """Mean cross-entropy over a batch and gradients for every parameter.

        Returns:
            (loss, grads) with grads a list of (dW, db) matching the layers.
        """
        x = np.asarray(features, dtype=float)
        y = np.asarray(targets_onehot, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ContractError("batch must be a non-empty 2-D array")
        if y.shape != (x.shape[0], self.output_size):
            raise ContractError(f"targets shape {y.shape} mismatch")

        # forward with caches
        pre, post = [], [x]
        a = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            a = self._apply(act, z)
            pre.append(z)
            post.append(a)

        n = x.shape[0]
        probs = post[-1]
        loss = float(-np.sum(y * np.log(np.clip(probs, 1e-300, None))) / n)

        # softmax + cross-entropy collapse to (p - y) / n at the output
        delta = (probs - y) / n
        grads = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads[layer] = (delta.T @ post[layer], delta.sum(axis=0))
            if layer == 0:
                break
            upstream = delta @ self.weights[layer]
            act = self.activations[layer - 1]
            if act == "relu":
                delta = upstream * (pre[layer - 1] > 0)
            elif act == "sigmoid":
                s = post[layer]
                delta = upstream * s * (1.0 - s)
            else:
                raise ContractError("softmax is only supported at the output")
        return loss, grads

    def num_params(self) -> int:
        """Trainable parameter count: sum of in*out + out over the layers."""
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def num_multiplies(self) -> int:
        """Real multiplications per classified symbol: sum of in*out."""
        return sum(w.size for w in self.weights)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.activations,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "format_version": SERIAL_FORMAT_VERSION,
            "layer_sizes": self.layer_sizes,
            "activations": self.activations,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Mlp":
        version = payload.get("format_version")
        if version != SERIAL_FORMAT_VERSION:
            raise ContractError(f"unsupported network format version {version!r}")
        return cls(payload["layer_sizes"], payload["activations"],
                   payload["weights"], payload["biases"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _target_bits(target) -> int:
    bits = getattr(target, "bits_per_symbol", target)
    if bits not in COMMON_HIDDEN:
        raise InvalidModulationError(f"unsupported target constellation: {target!r}")
    return bits


def build_arch(purpose: str, target, common_bits: int | None = None,
               rng: np.random.Generator | None = None) -> Mlp:
    """Instantiate one receiver classifier network.

    Args:
        purpose: "common_detect" (2 inputs) or "ic_private_detect"
            (2 + common_bits inputs).
        target: the stream's constellation (or its bits per symbol);
            fixes the hidden width and the 2**(M/2) output classes.
        common_bits: bits per common-stream symbol; required for
            "ic_private_detect".
        rng: weight-initialization stream (defaults to a fixed seed).
    """
    bits = _target_bits(target)
    if purpose == "common_detect":
        input_size = 2
        width = COMMON_HIDDEN[bits]
    elif purpose == "ic_private_detect":
        if common_bits is None:
            raise ContractError("ic_private_detect requires common_bits")
        _target_bits(common_bits)
        input_size = 2 + common_bits
        width = IC_HIDDEN[bits]
    else:
        raise ContractError(f"unknown purpose {purpose!r}, expected one of {PURPOSES}")

    n_hidden = 3 if bits == 8 else 2
    layer_sizes = [input_size] + [width] * n_hidden + [1 << (bits // 2)]
    activations = ["sigmoid"] + ["relu"] * (n_hidden - 1) + ["softmax"]
    if rng is None:
        rng = np.random.default_rng(0)
    return Mlp.initialize(layer_sizes, activations, rng)


@dataclass
class TrainSpec:
    """Optimization schedule for one network."""

    learning_rate: float
    epochs: int
    mini_batch_size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.mini_batch_size < 1:
            raise ContractError(f"mini_batch_size must be >= 1, got {self.mini_batch_size}")


def epoch_budget(bits_per_symbol: int) -> int:
    """Training epochs for a stream: 12.5 * log2(alphabet size), rounded up."""
    return math.ceil(12.5 * bits_per_symbol)


def batch_budget(train_count: int, top_private_order: int) -> int:
    """Mini-batch size: 25 samples per symbol of the largest private
    alphabet, clamped to the training-set size.

    A single full-batch step per epoch cannot move Adam far enough within
    the fixed epoch budgets (each step displaces a weight by at most
    roughly the learning rate), so batches are capped at 25 * |alphabet|
    to keep several updates per epoch once the set is large enough.
    """
    return min(train_count, 25 * top_private_order)


def default_train_spec(stream_bits: int, train_count: int, top_private_order: int,
                       learning_rate: float = 0.01, rng_seed: int = 0) -> TrainSpec:
    """Schedule a stream's networks from the standard simulation defaults."""
    return TrainSpec(learning_rate=learning_rate,
                     epochs=epoch_budget(stream_bits),
                     mini_batch_size=batch_budget(train_count, top_private_order),
                     rng_seed=rng_seed)


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_mlp(cls, mlp: Mlp) -> "AdamState":
        zeros = lambda: [(np.zeros_like(w), np.zeros_like(b))
                         for w, b in zip(mlp.weights, mlp.biases)]
        return cls(step=0, m=zeros(), v=zeros())


def adam_step(mlp: Mlp, grads, state: AdamState, spec: TrainSpec) -> None:
    """One bias-corrected Adam update, applied in place."""
    if len(state.m) != len(mlp.weights):
        raise ContractError("Adam state does not match the network")
    state.step += 1
    t = state.step
    lr, b1, b2, eps = spec.learning_rate, spec.beta1, spec.beta2, spec.eps
    for layer, (gw, gb) in enumerate(grads):
        for idx, grad, param in ((0, gw, mlp.weights[layer]), (1, gb, mlp.biases[layer])):
            m = state.m[layer][idx]
            v = state.v[layer][idx]
            m[...] = b1 * m + (1 - b1) * grad
            v[...] = b2 * v + (1 - b2) * grad**2
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(mlp: Mlp, features, labels, spec: TrainSpec) -> Mlp:
    """Mini-batch Adam training on integer class labels (in place).

    Batches are drawn by a seeded permutation each epoch; a batch size
    above the set size degrades to full-batch steps.  Deterministic for
    a fixed ``spec.rng_seed``.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractError("training set must be a non-empty 2-D array")
    if y.shape != (x.shape[0],):
        raise ContractError("labels must be one integer per training row")
    if y.min() < 0 or y.max() >= mlp.output_size:
        raise ContractError(
            f"label out of range [0, {mlp.output_size}): {int(y.min())}..{int(y.max())}")

    count = x.shape[0]
    onehot = np.zeros((count, mlp.output_size))
    onehot[np.arange(count), y] = 1.0

    batch = min(spec.mini_batch_size, count)
    rng = np.random.default_rng(spec.rng_seed)
    state = AdamState.for_mlp(mlp)
    for _ in range(spec.epochs):
        order = rng.permutation(count)
        for start in range(0, count, batch):
            sel = order[start:start + batch]
            _, grads = mlp.loss_and_grad(x[sel], onehot[sel])
            adam_step(mlp, grads, state, spec)
    return mlp


def accuracy(mlp: Mlp, features, labels) -> float:
    """Fraction of rows whose argmax class matches the label."""
    probs = mlp.forward(np.asarray(features, dtype=float))
    return float(np.mean(np.argmax(probs, axis=-1) == np.asarray(labels)))
