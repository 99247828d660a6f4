"""Randomizing encoders: the mechanisms the minimax game trains.

Two families:

* AffineGaussianEncoder -- per-coordinate shift-and-noise,
  X_r,k = X_k + beta_k + sigma_p,k Z_k, with sigma_p kept non-negative by
  a softplus reparameterization so its gradient stays smooth.  This is
  the tractable family whose game-theoretic optimum is known in closed
  form (see water_filling), which makes it the benchmark encoder.

* FeedforwardEncoder -- a dense network over [features (+ one-hot
  sensitive label) + fresh Gaussian noise] emitting a representation of
  the same dimension as the features; the general-purpose family for
  tabular data.

Both expose parameters() / encode() / backward() so the trainer can treat
them uniformly; backward() consumes d(loss)/d(X_r) and returns gradients
aligned with parameters().
"""

from __future__ import annotations

import math

import numpy as np

from .gmm import AffineMechanism
from .nn import MlpModel, backward as nn_backward, forward as nn_forward, mlp
from .numerics import RngState, sample_standard_normal

__all__ = ["AffineGaussianEncoder", "FeedforwardEncoder", "softplus", "softplus_inv"]


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires positive values")
    # log(e^y - 1), stable for both tails
    return np.where(y > 30.0, y, np.log(-np.expm1(-np.minimum(y, 30.0))) + np.minimum(y, 30.0))


def _dsoftplus(x):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


class AffineGaussianEncoder:
    """Shift-and-noise mechanism with learnable beta and noise scales."""

    def __init__(self, dim: int, init_sigma_p=1e-4):
        init = np.broadcast_to(np.asarray(init_sigma_p, dtype=np.float64), (dim,))
        self.raw_beta = np.zeros(dim)
        self.raw_sigma = np.array(softplus_inv(init), dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.raw_beta.size

    @property
    def beta(self) -> np.ndarray:
        return self.raw_beta

    @property
    def sigma_p(self) -> np.ndarray:
        return softplus(self.raw_sigma)

    def parameters(self) -> list[np.ndarray]:
        return [self.raw_beta, self.raw_sigma]

    def mechanism(self) -> AffineMechanism:
        """Freeze the current parameters into an evaluable mechanism."""
        return AffineMechanism(self.beta.copy(), self.sigma_p**2)

    def expected_distortion_with_grads(self, per_feature: bool = False):
        """E||X_r - X||^2 = ||beta||^2 + sum sigma_p^2, with exact gradients.

        The affine family admits this in closed form, which lets the
        trainer score the distortion constraint on a noiseless quantity
        instead of a minibatch estimate.
        """
        sp = self.sigma_p
        scale = self.dim if per_feature else 1
        value = float((self.raw_beta**2).sum() + (sp**2).sum()) / scale
        grad_beta = 2.0 * self.raw_beta / scale
        grad_raw_sigma = 2.0 * sp * _dsoftplus(self.raw_sigma) / scale
        return value, [grad_beta, grad_raw_sigma]

    def encode(self, x: np.ndarray, rng: RngState, sensitive_onehot=None, training: bool = True):
        x = np.asarray(x, dtype=np.float64)
        z = sample_standard_normal(rng, x.size).reshape(x.shape)
        x_r = x + self.raw_beta + self.sigma_p * z
        return x_r, {"z": z}

    def backward(self, cache, grad_xr: np.ndarray) -> list[np.ndarray]:
        grad_beta = grad_xr.sum(axis=0)
        grad_raw_sigma = (grad_xr * cache["z"]).sum(axis=0) * _dsoftplus(self.raw_sigma)
        return [grad_beta, grad_raw_sigma]


class FeedforwardEncoder:
    """Dense network combining the input row with a fresh noise vector."""

    def __init__(
        self,
        feature_dim: int,
        noise_dim: int,
        hidden,
        rng: RngState,
        n_sensitive: int = 0,
        activation: str = "leaky_relu",
        batch_norm: bool = False,
    ):
        self.feature_dim = feature_dim
        self.noise_dim = noise_dim
        self.n_sensitive = n_sensitive  # 0: encoder sees X only; >0: one-hot S is appended
        in_dim = feature_dim + n_sensitive + noise_dim
        self.net: MlpModel = mlp(
            (in_dim, *hidden, feature_dim),
            rng,
            activation=activation,
            head="linear",
            batch_norm=batch_norm,
        )

    @property
    def dim(self) -> int:
        return self.feature_dim

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()

    def encode(self, x: np.ndarray, rng: RngState, sensitive_onehot=None, training: bool = True):
        x = np.asarray(x, dtype=np.float64)
        parts = [x]
        if self.n_sensitive:
            if sensitive_onehot is None or sensitive_onehot.shape != (x.shape[0], self.n_sensitive):
                raise ValueError("this encoder requires a one-hot sensitive input per row")
            parts.append(sensitive_onehot)
        noise = sample_standard_normal(rng, x.shape[0] * self.noise_dim).reshape(
            x.shape[0], self.noise_dim
        )
        parts.append(noise)
        net_in = np.concatenate(parts, axis=1)
        x_r, cache = nn_forward(self.net, net_in, training=training)
        return x_r, cache

    def backward(self, cache, grad_xr: np.ndarray) -> list[np.ndarray]:
        grads, _ = nn_backward(self.net, cache, grad_xr)
        return grads


ENCODER_FORMAT_VERSION = 1


def save_encoder(encoder, path) -> None:
    """Versioned dump of either encoder family; round-trips bit-exactly."""
    import json

    if isinstance(encoder, AffineGaussianEncoder):
        meta = {"version": ENCODER_FORMAT_VERSION, "family": "affine"}
        arrays = {
            "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            "raw_beta": encoder.raw_beta,
            "raw_sigma": encoder.raw_sigma,
        }
    elif isinstance(encoder, FeedforwardEncoder):
        from .nn import MODEL_FORMAT_VERSION, save_model  # noqa: F401
        import io

        buf = io.BytesIO()
        save_model(encoder.net, buf)
        meta = {
            "version": ENCODER_FORMAT_VERSION,
            "family": "feedforward",
            "feature_dim": encoder.feature_dim,
            "noise_dim": encoder.noise_dim,
            "n_sensitive": encoder.n_sensitive,
        }
        arrays = {
            "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            "net": np.frombuffer(buf.getvalue(), dtype=np.uint8),
        }
    else:
        raise TypeError(f"unknown encoder type {type(encoder).__name__}")
    from .nn import _savez

    _savez(path, arrays)


def load_encoder(path):
    import io
    import json

    from .nn import load_model

    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != ENCODER_FORMAT_VERSION:
            raise ValueError(f"unsupported encoder format version {meta.get('version')!r}")
        if meta["family"] == "affine":
            enc = AffineGaussianEncoder(data["raw_beta"].size)
            enc.raw_beta = data["raw_beta"].copy()
            enc.raw_sigma = data["raw_sigma"].copy()
            return enc
        if meta["family"] == "feedforward":
            net = load_model(io.BytesIO(bytes(data["net"])))
            enc = FeedforwardEncoder.__new__(FeedforwardEncoder)
            enc.feature_dim = meta["feature_dim"]
            enc.noise_dim = meta["noise_dim"]
            enc.n_sensitive = meta["n_sensitive"]
            enc.net = net
            return enc
    raise ValueError("unrecognized encoder file")
