"""Minimal differentiable building blocks: dense layers, Adam, gradient checks.

Everything runs in float64 on explicit numpy generators; given the tiny model
sizes here, reproducibility matters more than speed. Layers accumulate
parameter gradients across backward calls (callers zero them per step), which
lets weight-sharing branches, like Siamese twins, sum their contributions
naturally.
"""

from __future__ import annotations

import numpy as np

Cache = tuple[np.ndarray, np.ndarray]  # (input, pre-activation)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(z, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_FORWARD = {
    "identity": lambda z: z,
    "relu": relu,
    "softplus": softplus,
    "sigmoid": sigmoid,
}

_DERIVATIVE = {
    "identity": lambda z: np.ones_like(z),
    "relu": lambda z: (z > 0).astype(np.float64),
    "softplus": sigmoid,
    "sigmoid": lambda z: sigmoid(z) * (1.0 - sigmoid(z)),
}


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


class Dense:
    """Fully connected layer: activation(W @ x + b)."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        activation: str = "identity",
        rng: np.random.Generator | None = None,
    ):
        if activation not in _FORWARD:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        if rng is None:
            self.weights = np.zeros((out_dim, in_dim))
        else:
            self.weights = glorot_uniform(rng, out_dim, in_dim)
        self.bias = np.zeros(out_dim)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, Cache]:
        """Forward pass returning the cache needed for backward."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"input dimension {x.shape[-1]}, layer expects {self.in_dim}"
            )
        z = x @ self.weights.T + self.bias
        return _FORWARD[self.activation](z), (x, z)

    def backward(self, grad_out: np.ndarray, cache: Cache) -> np.ndarray:
        """Accumulate parameter gradients and return the gradient w.r.t. input."""
        x, z = cache
        dz = grad_out * _DERIVATIVE[self.activation](z)
        if x.ndim == 1:
            self.grad_weights += np.outer(dz, x)
            self.grad_bias += dz
        else:
            self.grad_weights += dz.T @ x
            self.grad_bias += dz.sum(axis=0)
        return dz @ self.weights

    def zero_grads(self) -> None:
        self.grad_weights[:] = 0.0
        self.grad_bias[:] = 0.0

    @property
    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    @property
    def grads(self) -> list[np.ndarray]:
        return [self.grad_weights, self.grad_bias]


class Sequential:
    """A chain of Dense layers with reverse-mode backprop."""

    def __init__(self, layers: list[Dense]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[Cache]]:
        caches = []
        for layer in self.layers:
            x, cache = layer.forward_cached(x)
            caches.append(cache)
        return x, caches

    def backward(self, grad_out: np.ndarray, caches: list[Cache]) -> np.ndarray:
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad_out = layer.backward(grad_out, cache)
        return grad_out

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]


class Adam:
    """Adam optimizer with bias correction; moments mirror parameter shapes."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update parameters in place from their gradients."""
        if len(params) != len(self.m):
            raise ValueError(f"expected {len(self.m)} parameter arrays, got {len(params)}")
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"parameter shape {p.shape} != gradient shape {g.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def finite_difference_gradients(
    loss_fn, params: list[np.ndarray], eps: float = 1e-5
) -> list[np.ndarray]:
    """Central finite-difference gradient of ``loss_fn()`` w.r.t. each array.

    ``loss_fn`` must recompute the loss from the current contents of
    ``params``; entries are perturbed in place and restored.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            hi = loss_fn()
            flat_p[i] = orig - eps
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def gradient_relative_error(
    analytic: list[np.ndarray], numeric: list[np.ndarray]
) -> float:
    """Norm-based relative error between two full gradients."""
    a = np.concatenate([g.reshape(-1) for g in analytic])
    n = np.concatenate([g.reshape(-1) for g in numeric])
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)
