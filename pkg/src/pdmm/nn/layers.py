"""Minimal differentiable layers with explicit forward/backward.

All compute is float64. Layers cache whatever the backward pass needs, so
a layer instance is single-writer during training; frozen layers never
receive parameter updates.
"""
import numpy as np

from .backend import (
    conv2d_backward,
    conv2d_forward,
    maxpool2_backward,
    maxpool2_forward,
)


class ShapeError(ValueError):
    pass


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer; parameter-free by default."""

    frozen = False

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}
        self.velocity = {}

    def _add_param(self, key, value):
        self.params[key] = np.asarray(value, dtype=np.float64)
        self.grads[key] = np.zeros_like(self.params[key])
        self.velocity[key] = np.zeros_like(self.params[key])

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grads(self):
        for g in self.grads.values():
            g.fill(0.0)


class Dense(Layer):
    def __init__(self, name, n_in, n_out, rng):
        super().__init__(name)
        self.n_in = n_in
        self.n_out = n_out
        self._add_param("weight", glorot_uniform(rng, (n_out, n_in), n_in, n_out))
        self._add_param("bias", np.zeros(n_out))

    def forward(self, x):
        if x.shape != (self.n_in,):
            raise ShapeError(f"{self.name}: expected input ({self.n_in},), got {x.shape}")
        self._x = x
        return self.params["weight"] @ x + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] += np.outer(dy, self._x)
        self.grads["bias"] += dy
        return self.params["weight"].T @ dy


class Conv2D(Layer):
    def __init__(self, name, in_c, out_c, k, rng, stride=1):
        super().__init__(name)
        self.in_c = in_c
        self.out_c = out_c
        self.k = k
        self.stride = stride
        fan_in = in_c * k * k
        fan_out = out_c * k * k
        self._add_param("kernel", glorot_uniform(rng, (out_c, in_c, k, k), fan_in, fan_out))
        self._add_param("bias", np.zeros(out_c))

    def forward(self, x):
        if x.ndim != 3 or x.shape[0] != self.in_c:
            raise ShapeError(f"{self.name}: expected ({self.in_c},H,W), got {x.shape}")
        if x.shape[1] < self.k or x.shape[2] < self.k:
            raise ShapeError(f"{self.name}: input {x.shape[1:]} smaller than kernel {self.k}")
        self._x = np.ascontiguousarray(x)
        return np.asarray(
            conv2d_forward(self._x, self.params["kernel"], self.params["bias"], self.stride)
        )

    def backward(self, dy):
        dx, dk, db = conv2d_backward(
            self._x, self.params["kernel"], self.stride, np.ascontiguousarray(dy)
        )
        self.grads["kernel"] += dk
        self.grads["bias"] += db
        return np.asarray(dx)


class MaxPool2x2(Layer):
    def forward(self, x):
        if x.shape[1] < 2 or x.shape[2] < 2:
            raise ShapeError(f"{self.name}: spatial extent {x.shape[1:]} < 2")
        self._x_shape = x.shape
        y, self._arg = maxpool2_forward(np.ascontiguousarray(x))
        return np.asarray(y)

    def backward(self, dy):
        return np.asarray(
            maxpool2_backward(self._x_shape, self._arg, np.ascontiguousarray(dy))
        )


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(-1)

    def backward(self, dy):
        return dy.reshape(self._shape)


def run_forward(layers, x):
    for layer in layers:
        x = layer.forward(x)
    return x


def run_backward(layers, dy):
    for layer in reversed(layers):
        dy = layer.backward(dy)
    return dy


def softmax_cross_entropy(logits, label, weight=1.0):
    """Max-shifted softmax + weighted NLL. Returns (loss, probs, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range [0, {n - 1}]")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    # keep probs strictly positive when exp underflows for extreme logits
    probs = np.maximum(probs, np.finfo(np.float64).tiny)
    loss = -weight * np.log(probs[label])
    dlogits = weight * probs.copy()
    dlogits[label] -= weight
    return float(loss), probs, dlogits


def sgd_step(layers, lr, momentum):
    """v <- momentum*v + g; p <- p - lr*v; gradients reset to 0.

    Frozen layers keep their parameters and get their gradients cleared."""
    for layer in layers:
        if layer.frozen:
            layer.zero_grads()
            continue
        for key in layer.params:
            v = layer.velocity[key]
            v *= momentum
            v += layer.grads[key]
            layer.params[key] -= lr * v
            layer.grads[key].fill(0.0)


def grad_check(layer, x, rng, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Scalar objective L = sum(forward(x) * G) for a fixed random projection G."""
    x = np.array(x, dtype=np.float64)
    y = layer.forward(x)
    proj = rng.standard_normal(y.shape)

    layer.zero_grads()
    layer.forward(x)
    dx_analytic = layer.backward(proj.copy())
    param_analytic = {k: layer.grads[k].copy() for k in layer.params}

    def objective():
        return float(np.sum(layer.forward(x) * proj))

    worst = 0.0

    def compare(analytic, numeric):
        nonlocal worst
        denom = max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, abs(analytic - numeric) / denom)

    flat_x = x.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        plus = objective()
        flat_x[i] = orig - eps
        minus = objective()
        flat_x[i] = orig
        compare(dx_analytic.reshape(-1)[i], (plus - minus) / (2 * eps))

    for key, p in layer.params.items():
        flat_p = p.reshape(-1)
        analytic = param_analytic[key].reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            plus = objective()
            flat_p[i] = orig - eps
            minus = objective()
            flat_p[i] = orig
            compare(analytic[i], (plus - minus) / (2 * eps))

    layer.zero_grads()
    return worst
