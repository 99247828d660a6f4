"""Minimal dense-network engine with exact reverse-mode gradients and Adam.

Just enough machinery for the adversaries, feedforward encoders, and
downstream classifiers used elsewhere in the package: dense layers with
optional batch normalization, leaky-ReLU/ReLU/tanh/sigmoid/identity
activations, a softmax-logits or linear head, hand-derived backprop, and
bias-corrected Adam.  Everything is plain float64 numpy; a model is
mutated by exactly one trainer at a time.

Parameters are exposed as a flat list of arrays (weights, bias, and batch
norm scale/shift per layer, in layer order) so one optimizer state can
cover any model, including the affine encoder which reuses the same Adam
implementation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState

__all__ = [
    "DenseLayer",
    "BatchNorm",
    "MlpModel",
    "mlp",
    "forward",
    "backward",
    "softmax",
    "cross_entropy",
    "AdamState",
    "adam_step",
    "save_model",
    "load_model",
    "fit_classifier",
    "predict_proba",
]

LEAKY_SLOPE = 0.2  # convention from the adversarial-network literature

_ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")

MODEL_FORMAT_VERSION = 1


@dataclass
class BatchNorm:
    gamma: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "identity"
    norm: BatchNorm | None = None


@dataclass
class MlpModel:
    layers: list[DenseLayer]
    head: str = "softmax"  # "softmax": outputs are class logits; "linear": raw values

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (views, not copies)."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
            if layer.norm is not None:
                params.append(layer.norm.gamma)
                params.append(layer.norm.shift)
        return params


def mlp(
    sizes,
    rng: RngState,
    activation: str = "leaky_relu",
    head: str = "softmax",
    batch_norm: bool = False,
) -> MlpModel:
    """Build a dense network with Glorot-uniform weights and zero biases.

    ``sizes`` is (input, hidden..., output); hidden layers use
    ``activation`` (and batch norm when requested), the final layer is
    affine with identity activation so the head sees raw logits/values.
    """
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if head not in ("softmax", "linear"):
        raise ValueError(f"unknown head {head!r}")
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = bound * (2.0 * rng.uniform(fan_in * fan_out) - 1.0)
        last = i == len(sizes) - 2
        norm = None
        if batch_norm and not last:
            norm = BatchNorm(
                gamma=np.ones(fan_out),
                shift=np.zeros(fan_out),
                running_mean=np.zeros(fan_out),
                running_var=np.ones(fan_out),
            )
        layers.append(
            DenseLayer(
                weights=weights.reshape(fan_in, fan_out),
                bias=np.zeros(fan_out),
                activation="identity" if last else activation,
                norm=norm,
            )
        )
    return MlpModel(layers=layers, head=head)


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "identity":
        return pre
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "leaky_relu":
        return np.where(pre >= 0.0, pre, LEAKY_SLOPE * pre)
    if name == "tanh":
        return np.tanh(pre)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(pre, -500, 500)))
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "leaky_relu":
        # The reduced slope applies only to strictly negative pre-activations.
        return np.where(pre >= 0.0, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - post**2
    if name == "sigmoid":
        return post * (1.0 - post)
    raise ValueError(f"unknown activation {name!r}")


def forward(model: MlpModel, batch: np.ndarray, training: bool = False):
    """Run the network; returns (outputs, cache) for a later backward pass.

    Batch norm uses batch statistics in training mode (and updates the
    running estimates as a side effect); evaluation mode uses the stored
    running statistics.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"batch must be 2-d with {model.input_dim} columns, got shape {x.shape}"
        )
    cache = {"input": x, "layers": [], "training": training}
    for layer in model.layers:
        pre = x @ layer.weights + layer.bias
        entry = {"x_in": x, "pre": pre}
        normed = pre
        if layer.norm is not None:
            bn = layer.norm
            if training:
                mean = pre.mean(axis=0)
                var = pre.var(axis=0)
                bn.running_mean = bn.momentum * bn.running_mean + (1 - bn.momentum) * mean
                bn.running_var = bn.momentum * bn.running_var + (1 - bn.momentum) * var
            else:
                mean, var = bn.running_mean, bn.running_var
            inv_std = 1.0 / np.sqrt(var + bn.eps)
            xhat = (pre - mean) * inv_std
            normed = bn.gamma * xhat + bn.shift
            entry.update({"xhat": xhat, "inv_std": inv_std, "centered": pre - mean})
        post = _activate(layer.activation, normed)
        entry["normed"] = normed
        entry["post"] = post
        cache["layers"].append(entry)
        x = post
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite network output")
    return x, cache


def backward(model: MlpModel, cache, grad_out: np.ndarray):
    """Exact gradients for every parameter given d(loss)/d(outputs).

    Returns (grads, input_grad) where grads matches model.parameters()
    order and input_grad is d(loss)/d(batch) for chaining into an
    upstream encoder.
    """
    if len(cache["layers"]) != len(model.layers):
        raise ValueError("cache does not match model structure")
    delta = np.asarray(grad_out, dtype=np.float64)
    if delta.shape != cache["layers"][-1]["post"].shape:
        raise ValueError("grad_out shape does not match forward outputs (stale cache?)")
    grads_per_layer = []
    training = cache["training"]
    for layer, entry in zip(reversed(model.layers), reversed(cache["layers"])):
        act_grad = _activation_grad(layer.activation, entry["normed"], entry["post"])
        delta = delta * act_grad
        layer_grads = {}
        if layer.norm is not None:
            bn = layer.norm
            xhat, inv_std = entry["xhat"], entry["inv_std"]
            layer_grads["gamma"] = (delta * xhat).sum(axis=0)
            layer_grads["shift"] = delta.sum(axis=0)
            dxhat = delta * bn.gamma
            if training:
                n = delta.shape[0]
                centered = entry["centered"]
                dvar = (dxhat * centered).sum(axis=0) * (-0.5) * inv_std**3
                dmean = -(dxhat.sum(axis=0)) * inv_std + dvar * (-2.0 / n) * centered.sum(axis=0)
                delta = dxhat * inv_std + dvar * (2.0 / n) * centered + dmean / n
            else:
                delta = dxhat * inv_std
        layer_grads["weights"] = entry["x_in"].T @ delta
        layer_grads["bias"] = delta.sum(axis=0)
        grads_per_layer.append(layer_grads)
        delta = delta @ layer.weights.T
    grads = []
    for layer, layer_grads in zip(model.layers, reversed(grads_per_layer)):
        grads.append(layer_grads["weights"])
        grads.append(layer_grads["bias"])
        if layer.norm is not None:
            grads.append(layer_grads["gamma"])
            grads.append(layer_grads["shift"])
    return grads, delta


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    The gradient is (softmax - onehot)/n, ready to feed into backward().
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if n == 0:
        raise ValueError("empty batch")
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must be integers in range for each row")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def predict_proba(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    out, _ = forward(model, batch, training=False)
    if model.head != "softmax":
        raise ValueError("predict_proba requires a softmax head")
    return softmax(out)


class AdamState:
    """Bias-corrected Adam moments for a fixed list of parameter arrays."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params, grads, state: AdamState) -> None:
    """One in-place Adam update of ``params`` along ``grads``."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient lists do not match optimizer state")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient at step {state.step + 1}; aborting update"
            )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


def _savez(target, arrays) -> None:
    # np.savez appends ".npz" to bare string paths; writing through an open
    # handle (or any file object) keeps the caller's filename as-is.
    if hasattr(target, "write"):
        np.savez(target, **arrays)
    else:
        with open(target, "wb") as fh:
            np.savez(fh, **arrays)


def save_model(model: MlpModel, path) -> None:
    """Versioned binary dump (npz) that round-trips bit-exactly."""
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "head": model.head,
        "layers": [
            {"activation": layer.activation, "norm": layer.norm is not None}
            for layer in model.layers
        ],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for i, layer in enumerate(model.layers):
        arrays[f"w{i}"] = layer.weights
        arrays[f"b{i}"] = layer.bias
        if layer.norm is not None:
            bn = layer.norm
            arrays[f"bn{i}"] = np.stack([bn.gamma, bn.shift, bn.running_mean, bn.running_var])
            arrays[f"bnp{i}"] = np.array([bn.momentum, bn.eps])
    _savez(path, arrays)


def load_model(path) -> MlpModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(
                f"unsupported model format version {meta.get('version')!r}; "
                f"expected {MODEL_FORMAT_VERSION}"
            )
        layers = []
        for i, info in enumerate(meta["layers"]):
            norm = None
            if info["norm"]:
                stacked = data[f"bn{i}"]
                momentum, eps = data[f"bnp{i}"]
                norm = BatchNorm(
                    gamma=stacked[0].copy(),
                    shift=stacked[1].copy(),
                    running_mean=stacked[2].copy(),
                    running_var=stacked[3].copy(),
                    momentum=float(momentum),
                    eps=float(eps),
                )
            layers.append(
                DenseLayer(
                    weights=data[f"w{i}"].copy(),
                    bias=data[f"b{i}"].copy(),
                    activation=info["activation"],
                    norm=norm,
                )
            )
        return MlpModel(layers=layers, head=meta["head"])


def fit_classifier(
    x: np.ndarray,
    labels: np.ndarray,
    hidden,
    rng: RngState,
    epochs: int = 30,
    batch_size: int = 256,
    lr: float = 0.005,
    activation: str = "leaky_relu",
) -> MlpModel:
    """Train a fresh softmax classifier; convenience wrapper used by the
    evaluation pipeline (downstream tasks, data-driven adversaries, and the
    feature embeddings fed to the mutual-information estimator)."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if labels.size else 2
    model = mlp((x.shape[1], *hidden, max(n_classes, 2)), rng.child("init"), activation=activation)
    state = AdamState(model.parameters(), lr=lr)
    order_rng = rng.child("batches")
    n = x.shape[0]
    for _ in range(epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits, cache = forward(model, x[idx], training=True)
            _, dlogits = cross_entropy(logits, labels[idx])
            grads, _ = backward(model, cache, dlogits)
            adam_step(model.parameters(), grads, state)
    return model
