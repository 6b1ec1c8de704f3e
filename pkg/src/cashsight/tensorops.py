"""Minimal dense-tensor layer zoo: exactly the ops the detection head needs,
each with a hand-derived backward pass.

Activations are plain numpy arrays in NCHW layout; learnable state lives in
:class:`Param` (value + accumulated gradient).  There is no autodiff graph:
composites chain their backward passes explicitly, which keeps every
gradient small enough to verify against finite differences.

Forward calls are pure given their inputs: anything the backward pass needs
goes into an explicit ``cache`` dict supplied by the caller, so shared layer
objects can serve concurrent inference threads (batchnorm running-stat
updates in training mode are the single exception and belong to one
training thread).

dtype policy: float32 on inference/training paths, float64 for gradient
checking.  ``conv2d`` additionally guarantees that in float64 its
accumulation order is the plain nested-loop order (channel, then kernel row,
then kernel column), so a scalar reference convolution reproduces it
bit-for-bit; the float32 path goes through im2col + BLAS for speed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Param",
    "ShapeError",
    "Conv2d",
    "BatchNorm2d",
    "Linear",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "adaptive_avg_pool_1x1",
    "adaptive_avg_pool_1x1_backward",
    "grad_check",
    "sgd_step",
]


class ShapeError(ValueError):
    """Input shape incompatible with layer parameters."""


class Param:
    """A learnable array plus its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form avoids exp overflow for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def adaptive_avg_pool_1x1(x: np.ndarray) -> np.ndarray:
    """[B,C,H,W] -> [B,C,1,1] per-channel spatial mean."""
    return x.mean(axis=(2, 3), keepdims=True)


def adaptive_avg_pool_1x1_backward(dy: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.broadcast_to(dy / (h * w), dy.shape[:2] + (h, w)).copy()


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Padded [B,C,Hp,Wp] -> [B, C*kh*kw, Ho*Wo] patch matrix (stride 1).

    Built from kh*kw contiguous slice copies, which beats a strided gather
    by a wide margin on large maps.
    """
    b, c, hp, wp = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    cols = np.empty((b, c, kh * kw, ho * wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j, :] = xp[:, :, i : i + ho, j : j + wo].reshape(b, c, -1)
    return cols.reshape(b, c * kh * kw, ho * wo)


class Conv2d:
    """Stride-1 cross-correlation with optional zero padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, padding: int, rng: np.random.Generator | None = None, dtype=np.float32):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel_size = kernel_size
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * kernel_size * kernel_size
        w = rng.standard_normal((out_ch, in_ch, kernel_size, kernel_size)) * np.sqrt(2.0 / fan_in)
        self.weight = Param(w.astype(dtype))
        self.bias = Param(np.zeros(out_ch, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"conv2d expects [B,{self.in_ch},H,W], got {x.shape}")
        k, p = self.kernel_size, self.padding
        w, bias = self.weight.value, self.bias.value
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        b, c, hp, wp = xp.shape
        ho, wo = hp - k + 1, wp - k + 1
        if x.dtype == np.float64:
            # ordered accumulation: per output element the terms add in
            # (channel, kernel row, kernel col) order, reproducible by a
            # scalar nested loop bit-for-bit
            w64 = w.astype(np.float64)
            out = np.zeros((b, self.out_ch, ho, wo), dtype=np.float64)
            for ci in range(c):
                for i in range(k):
                    for j in range(k):
                        out += xp[:, None, ci, i : i + ho, j : j + wo] * w64[None, :, ci, i, j, None, None]
            out += bias.astype(np.float64)[None, :, None, None]
            if cache is not None:
                cache["xp"] = xp
            return out
        if k == 1:
            cols = xp.reshape(b, c, hp * wp)
        else:
            cols = _im2col(xp, k, k)
        if cache is not None:
            cache["cols"] = cols
        w2 = w.reshape(self.out_ch, -1)
        out = np.matmul(w2, cols).reshape(b, self.out_ch, ho, wo)
        return out + bias[None, :, None, None]

    def backward(self, dy: np.ndarray, cache: dict, need_dx: bool = True) -> np.ndarray | None:
        k, p = self.kernel_size, self.padding
        b, _, ho, wo = dy.shape
        cols = cache["cols"] if "cols" in cache else _im2col(cache["xp"], k, k)
        dy_flat = dy.reshape(b, self.out_ch, ho * wo)
        self.bias.grad += dy.sum(axis=(0, 2, 3)).astype(self.bias.grad.dtype)
        dw = np.matmul(dy_flat, cols.transpose(0, 2, 1)).sum(axis=0)
        self.weight.grad += dw.reshape(self.weight.shape).astype(self.weight.grad.dtype)
        if not need_dx:
            return None

        w2 = self.weight.value.reshape(self.out_ch, -1).astype(dy.dtype)
        dcols = np.matmul(w2.T, dy_flat)  # [B, C*k*k, Ho*Wo]
        dcols = dcols.reshape(b, self.in_ch, k, k, ho, wo)
        hp, wp = ho + k - 1, wo + k - 1
        dxp = np.zeros((b, self.in_ch, hp, wp), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + ho, j : j + wo] += dcols[:, :, i, j]
        return dxp[:, :, p : hp - p, p : wp - p] if p else dxp


class BatchNorm2d:
    """Per-channel batch normalization with running statistics."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray, training: bool = False, cache: dict | None = None) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm2d expects [B,{self.channels},H,W], got {x.shape}")
        g = self.gamma.value.astype(x.dtype)[None, :, None, None]
        be = self.beta.value.astype(x.dtype)[None, :, None, None]
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))  # biased, used for normalization
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            n = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * (n / max(n - 1, 1))
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(self.running_mean.dtype)
            self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var.astype(x.dtype) + self.eps)
            xhat = (x - self.running_mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
        if cache is not None:
            cache["mode"] = "train" if training else "eval"
            cache["xhat"] = xhat
            cache["inv_std"] = inv_std
        return g * xhat + be

    def backward(self, dy: np.ndarray, cache: dict) -> np.ndarray:
        xhat, inv_std = cache["xhat"], cache["inv_std"]
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3)).astype(self.gamma.grad.dtype)
        self.beta.grad += dy.sum(axis=(0, 2, 3)).astype(self.beta.grad.dtype)
        g = self.gamma.value.astype(dy.dtype)
        if cache["mode"] == "eval":
            return dy * (g * inv_std)[None, :, None, None]
        n = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dxhat = dy * g[None, :, None, None]
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv_std[None, :, None, None] / n) * (n * dxhat - s1 - xhat * s2)


class Linear:
    """Fully connected layer: y = x @ W.T + b."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        w = rng.standard_normal((out_features, in_features)) * np.sqrt(2.0 / in_features)
        self.weight = Param(w.astype(dtype))
        self.bias = Param(np.zeros(out_features, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"linear expects [B,{self.in_features}], got {x.shape}")
        if cache is not None:
            cache["x"] = x
        return x @ self.weight.value.T.astype(x.dtype) + self.bias.value.astype(x.dtype)

    def backward(self, dy: np.ndarray, cache: dict) -> np.ndarray:
        self.weight.grad += (dy.T @ cache["x"]).astype(self.weight.grad.dtype)
        self.bias.grad += dy.sum(axis=0).astype(self.bias.grad.dtype)
        return dy @ self.weight.value.astype(dy.dtype)


def sgd_step(params, lr: float) -> None:
    """Plain SGD update followed by gradient reset."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError("non-finite gradient in SGD step")
        p.value -= (lr * p.grad).astype(p.value.dtype)
        p.zero_grad()


def grad_check(forward, arrays, eps: float = 1e-4, rng: np.random.Generator | None = None, max_checks_per_array: int | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward(arrays)`` must return ``(y, backward)`` where ``backward(dy)``
    yields one gradient per entry of ``arrays``.  The scalar objective is
    ``sum(y * R)`` for a fixed random projection R, so ``dy = R``.  All
    arrays must be float64; the relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.

    ``max_checks_per_array`` caps the finite-difference evaluations per
    array by sampling coordinates without replacement (large composites are
    too expensive to probe exhaustively).
    """
    for a in arrays:
        if a.dtype != np.float64:
            raise ValueError("grad_check requires float64 arrays")
    rng = rng or np.random.default_rng(0)
    y0, backward = forward(arrays)
    if not np.all(np.isfinite(y0)):
        raise FloatingPointError("non-finite forward output in grad_check")
    proj = rng.standard_normal(y0.shape)
    analytic = backward(proj)

    worst = 0.0
    for idx, a in enumerate(arrays):
        an = np.asarray(analytic[idx])
        if max_checks_per_array is not None and a.size > max_checks_per_array:
            coords = rng.choice(a.size, size=max_checks_per_array, replace=False)
        else:
            coords = range(a.size)
        for i in coords:
            orig = a.flat[i]
            a.flat[i] = orig + eps
            yp = float(np.sum(forward(arrays)[0] * proj))
            a.flat[i] = orig - eps
            ym = float(np.sum(forward(arrays)[0] * proj))
            a.flat[i] = orig
            num = (yp - ym) / (2.0 * eps)
            if not np.isfinite(num):
                raise FloatingPointError("non-finite finite-difference value")
            aval = float(an.flat[i])
            rel = abs(aval - num) / max(abs(aval), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst
