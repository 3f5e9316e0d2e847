"""Fully connected networks with layer normalisation, written against numpy.

Every hidden layer is ``tanh(LayerNorm(x W + b))``; the output layer is affine,
optionally followed by ``tanh``.  All parameters of a network live in one flat
vector (``MlpWeights.flat``) so that optimiser and target updates are single
vector operations; per-layer arrays are views into it.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

LN_EPS = 1e-5


class MlpWeights:
    """Parameters of one network plus its Adam moment accumulators."""

    def __init__(self, sizes, out_tanh=False, flat=None, ln_eps=LN_EPS):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        self.out_tanh = bool(out_tanh)
        self.ln_eps = float(ln_eps)
        self.layout = []
        off = 0
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            names = [("W", (fan_in, fan_out)), ("b", (fan_out,))]
            if i < n_layers - 1:
                names += [("g", (fan_out,)), ("o", (fan_out,))]
            for name, shape in names:
                size = int(np.prod(shape))
                self.layout.append((i, name, shape, off, size))
                off += size
        self.n_params = off
        if flat is None:
            flat = np.zeros(off)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (off,):
            raise ShapeMismatch(f"expected {off} parameters, got {flat.shape}")
        self.flat = flat.copy()
        self.adam_m = np.zeros(off)
        self.adam_v = np.zeros(off)
        self.adam_t = 0
        self._bind()

    def _bind(self):
        n_layers = len(self.sizes) - 1
        self.layers = [dict() for _ in range(n_layers)]
        for i, name, shape, off, size in self.layout:
            self.layers[i][name] = self.flat[off:off + size].reshape(shape)

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def copy(self) -> "MlpWeights":
        other = MlpWeights(self.sizes, self.out_tanh, self.flat, self.ln_eps)
        other.adam_m = self.adam_m.copy()
        other.adam_v = self.adam_v.copy()
        other.adam_t = self.adam_t
        return other

    def set_flat(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.flat.shape:
            raise ShapeMismatch("parameter vector shape mismatch")
        self.flat[:] = values

    def grad_views(self, grad):
        """Per-layer dict views into a flat gradient vector."""
        out = [dict() for _ in self.layers]
        for i, name, shape, off, size in self.layout:
            out[i][name] = grad[off:off + size].reshape(shape)
        return out


def init_uniform(w: MlpWeights, rng: np.random.Generator, final_scale=1.0) -> MlpWeights:
    """Fan-in uniform initialisation; the output layer is additionally scaled."""
    n_layers = len(w.layers)
    for i, layer in enumerate(w.layers):
        bound = 1.0 / np.sqrt(w.sizes[i])
        scale = final_scale if i == n_layers - 1 else 1.0
        layer["W"][...] = rng.uniform(-bound, bound, layer["W"].shape) * scale
        layer["b"][...] = rng.uniform(-bound, bound, layer["b"].shape) * scale
        if "g" in layer:
            layer["g"][...] = 1.0
            layer["o"][...] = 0.0
    return w


def forward(w: MlpWeights, x, keep_cache=False):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != w.in_dim:
        raise ShapeMismatch(f"network expects input width {w.in_dim}, got {x.shape[-1]}")
    cache = []
    h = x
    last = len(w.layers) - 1
    for i, layer in enumerate(w.layers):
        z = h @ layer["W"] + layer["b"]
        if i < last:
            mu = z.mean(axis=-1, keepdims=True)
            zc = z - mu
            sig = np.sqrt((zc * zc).mean(axis=-1, keepdims=True) + w.ln_eps)
            xhat = zc / sig
            a = np.tanh(xhat * layer["g"] + layer["o"])
            if keep_cache:
                cache.append((h, xhat, sig, a))
            h = a
        else:
            out = np.tanh(z) if w.out_tanh else z
            if keep_cache:
                cache.append((h, out))
    return (out, cache) if keep_cache else out


def backward(w: MlpWeights, cache, dout):
    """Gradient of a scalar loss given dL/d(output); returns (flat grad, dL/d(input))."""
    grad = np.zeros(w.n_params)
    gv = w.grad_views(grad)
    last = len(w.layers) - 1
    h, out = cache[last]
    dz = dout * (1.0 - out * out) if w.out_tanh else dout
    for i in range(last, -1, -1):
        layer = w.layers[i]
        if i < last:
            h, xhat, sig, a = cache[i]
            dy = dh * (1.0 - a * a)
            gv[i]["g"][...] = (dy * xhat).sum(axis=0)
            gv[i]["o"][...] = dy.sum(axis=0)
            dxh = dy * layer["g"]
            dz = (dxh - dxh.mean(axis=-1, keepdims=True)
                  - xhat * (dxh * xhat).mean(axis=-1, keepdims=True)) / sig
        gv[i]["W"][...] = h.T @ dz
        gv[i]["b"][...] = dz.sum(axis=0)
        dh = dz @ layer["W"].T
    return grad, dh


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, w: MlpWeights, grad):
        g = grad + self.weight_decay * w.flat if self.weight_decay else grad
        w.adam_t += 1
        w.adam_m *= self.beta1
        w.adam_m += (1.0 - self.beta1) * g
        w.adam_v *= self.beta2
        w.adam_v += (1.0 - self.beta2) * (g * g)
        mhat = w.adam_m / (1.0 - self.beta1 ** w.adam_t)
        vhat = w.adam_v / (1.0 - self.beta2 ** w.adam_t)
        w.flat -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
