"""A small fully connected network with hand-written reverse mode and AdamW.

Hidden layers use ReLU, the output layer is affine.  Everything runs in
float64 so gradients can be checked against central differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[i] has shape (layer_dims[i+1], layer_dims[i])
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ValueError("an Mlp needs at least an input and an output dimension")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape}, {b.shape}")

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are shared, not copied."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("hidden_activation", "relu") != "relu" or d.get("output_activation", "identity") != "identity":
            raise ValueError("only relu hidden / identity output networks are supported")
        return cls(
            [int(n) for n in d["layer_dims"]],
            [np.array(w, dtype=float) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Mlp":
        return cls.from_dict(json.loads(s))


def mlp_init(layer_dims, seed: int) -> Mlp:
    """He-uniform weights in +-sqrt(6 / fan_in), zero biases."""
    dims = [int(n) for n in layer_dims]
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise ValueError(f"invalid layer dims {layer_dims!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases)


@dataclass
class Cache:
    net_id: int
    inputs: list[np.ndarray]  # input to each layer (post-activation of the previous one)
    pre: list[np.ndarray]  # pre-activations


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    """Evaluate ``net`` on a vector (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.layer_dims[0]:
        raise ValueError(f"expected input dimension {net.layer_dims[0]}, got {x.shape[-1]}")
    inputs, pre = [], []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, Cache(id(net), inputs, pre)


def predict(net: Mlp, x: np.ndarray) -> np.ndarray:
    return forward(net, x)[0]


def backward(net: Mlp, cache: Cache, dy: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of sum(y * dy) with respect to [W0, b0, ...] and the input.

    For a batch, parameter gradients are summed over rows and the input
    gradient is returned per row.
    """
    if cache.net_id != id(net) or len(cache.pre) != len(net.weights):
        raise ValueError("cache does not belong to this network")
    g = np.asarray(dy, dtype=float)
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"dy shape {g.shape} does not match output shape {cache.pre[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    for i in range(len(net.weights) - 1, -1, -1):
        if i != len(net.weights) - 1:
            g = g * (cache.pre[i] > 0.0)
        h = cache.inputs[i]
        if g.ndim == 1:
            grads[2 * i] = np.outer(g, h)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = g.T @ h
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i]
    return grads, g


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamWState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamWState, lr: float) -> None:
    """In-place decoupled-weight-decay Adam update (PyTorch ``AdamW`` semantics)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if state.weight_decay:
            p *= 1.0 - lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


@dataclass
class RegressionDataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in count")

    def __len__(self):
        return len(self.inputs)


def mse(net: Mlp, data: RegressionDataset) -> float:
    r = predict(net, data.inputs) - data.targets
    return float(np.mean(r * r))


def lr_at(epoch: int, epochs: int, lr: float, schedule: str) -> float:
    if schedule == "constant":
        return lr
    if schedule == "cosine":
        return 0.5 * lr * (1.0 + math.cos(math.pi * epoch / epochs))
    raise ValueError(f"unknown learning-rate schedule {schedule!r}")


def train_regression(
    net: Mlp, data: RegressionDataset, epochs: int, batch_size: int, lr: float, seed: int,
    weight_decay: float = 0.01, schedule: str = "constant",
) -> tuple[Mlp, list[float]]:
    """Mini-batch MSE training.  Returns a trained copy and the mean batch loss per epoch.

    ``schedule="cosine"`` anneals the rate from ``lr`` towards zero over the
    run, stepping once per epoch.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    net = net.copy()
    params = net.params
    opt = AdamWState.for_params(params, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    n = len(data)
    out_dim = data.targets.shape[1]
    history = []
    for epoch in range(epochs):
        epoch_lr = lr_at(epoch, epochs, lr, schedule)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x, t = data.inputs[idx], data.targets[idx]
            y, cache = forward(net, x)
            r = y - t
            losses.append(float(np.mean(r * r)))
            grads, _ = backward(net, cache, 2.0 * r / (len(idx) * out_dim))
            adamw_step(params, grads, opt, epoch_lr)
        if not net.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        history.append(float(np.mean(losses)))
    return net, history
