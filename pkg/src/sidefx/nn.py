"""Dense layers with hand-written gradients, binary cross-entropy and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946

BCE_EPS = 1e-7

ACTIVATIONS = ("selu", "sigmoid", "linear")
INIT_SCHEMES = ("lecun_normal", "glorot_normal")


class NumericalFault(ArithmeticError):
    """A non-finite value appeared during training or inference."""


def selu(x):
    x = np.asarray(x, dtype=float)
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x):
    x = np.asarray(x, dtype=float)
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "selu":
        return selu(z)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation given pre-activation ``z`` and output ``a``."""
    if kind == "selu":
        return selu_grad(z)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def init_weights(shape: tuple[int, int], scheme: str, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``(out, in)`` weight matrix.

    ``lecun_normal`` uses variance ``1/fan_in``; ``glorot_normal`` uses
    ``2/(fan_in + fan_out)``. Both are plain (untruncated) normals.
    """
    fan_out, fan_in = shape
    if fan_out <= 0 or fan_in <= 0:
        raise ValueError(f"weight dimensions must be positive, got {shape}")
    if scheme == "lecun_normal":
        std = np.sqrt(1.0 / fan_in)
    elif scheme == "glorot_normal":
        std = np.sqrt(2.0 / (fan_in + fan_out))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return rng.normal(0.0, std, size=shape)


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    layers: list[Dense]
    init: str = "lecun_normal"

    def __post_init__(self):
        for prev, layer in zip(self.layers, self.layers[1:]):
            if layer.in_dim != prev.out_dim:
                raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {layer.in_dim}")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ValueError("bias shape does not match weight rows")

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str],
        init: str,
        rng: np.random.Generator,
        dtype=np.float64,
    ) -> "Mlp":
        """Build an MLP with layer widths ``sizes`` (input first) and zero biases."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        layers = [
            Dense(
                init_weights((n_out, n_in), init, rng).astype(dtype),
                np.zeros(n_out, dtype=dtype),
                act,
            )
            for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations)
        ]
        return cls(layers, init)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def named_arrays(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for t, layer in enumerate(self.layers):
            yield f"{prefix}layers[{t}].weight", layer.weight
            yield f"{prefix}layers[{t}].bias", layer.bias

    def zeros_like(self) -> "Mlp":
        return Mlp(
            [Dense(np.zeros_like(l.weight), np.zeros_like(l.bias), l.activation) for l in self.layers],
            self.init,
        )

    def copy(self) -> "Mlp":
        return Mlp(
            [Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            self.init,
        )


@dataclass
class MlpCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    out: list[np.ndarray] = field(default_factory=list)


def mlp_forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Apply ``mlp`` to the rows of ``x`` (batch x in_dim)."""
    if x.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise ValueError(f"expected input of shape (*, {mlp.in_dim}), got {x.shape}")
    cache = MlpCache()
    h = x
    for layer in mlp.layers:
        cache.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = activate(layer.activation, z)
        cache.pre.append(z)
        cache.out.append(h)
    return h, cache


def mlp_backward(mlp: Mlp, cache: MlpCache, grad_out: np.ndarray) -> tuple[np.ndarray, Mlp]:
    """Backpropagate ``grad_out`` (batch x out_dim) through a cached forward pass.

    Returns the gradient w.r.t. the input batch and an :class:`Mlp` holding
    parameter gradients summed over the batch.
    """
    if len(cache.pre) != len(mlp.layers):
        raise ValueError("cache does not match this network")
    if grad_out.shape != cache.out[-1].shape:
        raise ValueError(f"upstream gradient shape {grad_out.shape} != output {cache.out[-1].shape}")
    grads: list[Dense] = [None] * len(mlp.layers)  # type: ignore[list-item]
    g = grad_out
    for t in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[t]
        dz = g * activation_grad(layer.activation, cache.pre[t], cache.out[t])
        grads[t] = Dense(dz.T @ cache.inputs[t], dz.sum(axis=0), layer.activation)
        g = dz @ layer.weight
    return g, Mlp(grads, mlp.init)


def bce_loss(pred: np.ndarray, target: np.ndarray, eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. ``pred``.

    Predictions are clipped to ``[eps, 1 - eps]``; the gradient is zero where
    clipping is active.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    p = np.clip(pred, eps, 1.0 - eps)
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    inside = (pred >= eps) & (pred <= 1.0 - eps)
    grad = np.where(inside, (p - target) / (p * (1.0 - p)), 0.0) / p.size
    return float(loss), grad


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays (updated in place)."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if params.keys() != grads.keys():
            raise ValueError("parameter and gradient names differ")
        for name, g in grads.items():
            if g.shape != params[name].shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            if not np.all(np.isfinite(g)):
                raise NumericalFault(f"non-finite gradient for {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
