"""Dense linear-algebra and differentiable-layer kernel.

Matrices are plain 2-D float64 numpy arrays (row-major); vectors are 1-D
float64 arrays.  Everything downstream (autoencoders, rating scorers, the
orthogonal mapping, the NMF lab) builds on the handful of operations here:
validated matmul, dense-layer forward/backward with exact analytic
gradients, an SGD step, and a central-difference gradient checker.

Randomness is never global: every consumer derives its own
``numpy.random.Generator`` through :func:`make_rng` with an explicit seed
plus integer stream labels, so identical seeds reproduce identical
trajectories bitwise in single-threaded runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("identity", "sigmoid", "relu")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for (seed, stream labels).

    Distinct label tuples give statistically independent streams, so e.g.
    the domain-A scorer init never depends on how many draws the domain-B
    scorer consumed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def require_finite(a: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Validated matrix product: shapes must chain, result must be finite."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return require_finite(a @ b, "matmul result")


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d act(z)/dz, reusing the forward output y where that is cheaper."""
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "relu":
        return (z > 0).astype(np.float64)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """One affine layer y = act(W x + b); weights (out, in), bias (out,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        self.bias = as_vector(self.bias, "bias")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


def xavier_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def dense_layer(rng: np.random.Generator, n_in: int, n_out: int, activation: str) -> DenseLayer:
    """Xavier-uniform weights, zero bias."""
    return DenseLayer(xavier_uniform(rng, n_out, n_in), np.zeros(n_out), activation)


def layer_forward(layer: DenseLayer, x: np.ndarray):
    """Forward pass.  x is (n_in,) or a batch (n, n_in); returns (y, cache).

    The cache keeps the input and pre-activation for :func:`layer_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != layer.n_in:
        raise ValueError(f"layer input shape {x.shape} incompatible with weights {layer.weights.shape}")
    z = xb @ layer.weights.T + layer.bias
    y = _apply_activation(layer.activation, z)
    cache = (xb, z, y, single)
    return (y[0] if single else y), cache


def layer_backward(layer: DenseLayer, cache, dy: np.ndarray):
    """Exact analytic gradients chained with dy.

    Returns (dx, dW, db) with dx matching the forward input's shape and
    dW, db shaped like the layer parameters.
    """
    xb, z, y, single = cache
    dy = np.asarray(dy, dtype=np.float64)
    dyb = dy[None, :] if single else dy
    if dyb.shape != z.shape:
        raise ValueError(f"dy shape {dy.shape} does not match forward output {z.shape}")
    dz = dyb * _activation_grad(layer.activation, z, y)
    dW = dz.T @ xb
    db = dz.sum(axis=0)
    dx = dz @ layer.weights
    return (dx[0] if single else dx), dW, db


def sgd_step(params, grads, lr: float):
    """Elementwise p <- p - lr * g over parallel lists of arrays.

    Returns new arrays; inputs are never mutated.  Non-finite gradients are
    an error (they mean the loss blew up upstream).
    """
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    glist = [grads] if single else list(grads)
    if len(plist) != len(glist):
        raise ValueError(f"{len(plist)} params vs {len(glist)} grads")
    out = []
    for p, g in zip(plist, glist):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"param shape {p.shape} != grad shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in sgd_step")
        out.append(p - lr * g)
    return out[0] if single else out


def grad_check(loss_and_grad, params, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad(params) -> (loss, grads)`` must be deterministic; params
    and grads are parallel lists of arrays.  Error is normalized against
    max(1, |analytic|, |numeric|) per component so near-zero gradients are
    compared absolutely.
    """
    params = [np.asarray(p, dtype=np.float64) for p in params]
    _, grads = loss_and_grad(params)
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.ravel()
        for i in range(flat.size):
            bumped = [q.copy() for q in params]
            bumped[k].ravel()[i] = flat[i] + h
            lp, _ = loss_and_grad(bumped)
            bumped[k].ravel()[i] = flat[i] - h
            lm, _ = loss_and_grad(bumped)
            num = (lp - lm) / (2.0 * h)
            ana = grads[k].ravel()[i]
            err = abs(ana - num) / max(1.0, abs(ana), abs(num))
            worst = max(worst, err)
    return worst
