"""Small numpy networks with hand-written reverse-mode gradients.

A :class:`Net` is a stack of layers built from :class:`LayerSpec` entries.
Parameters live in one flat vector; each layer sees views into it. The
forward pass returns per-layer caches that :meth:`Net.backward` consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("dense", "conv", "transposed_conv", "batch_norm", "relu", "leaky_relu",
               "tanh", "reshape", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    leaky_slope: float = 0.2
    shape: tuple = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel <= 0 or self.stride <= 0:
            raise ValueError("kernel and stride must be positive")
        if self.kind in ("dense", "conv", "transposed_conv") and (self.in_ch <= 0 or self.out_ch <= 0):
            raise ValueError(f"{self.kind} needs in_ch and out_ch")
        if self.kind == "batch_norm" and self.out_ch <= 0:
            raise ValueError("batch_norm needs out_ch")
        if self.kind == "reshape" and not self.shape:
            raise ValueError("reshape needs a target shape")


# -- convolution primitives -------------------------------------------------

def _windows(xp, k, stride):
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x, w, b, stride, pad):
    """Cross-correlation. x (B,C,H,W), w (O,C,k,k) -> (B,O,Ho,Wo) and im2col cache."""
    bsz, cin, _, _ = x.shape
    out, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(xp, k, stride)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, cin * k * k)
    y = cols @ w.reshape(out, -1).T
    if b is not None:
        y = y + b
    return y.reshape(bsz, ho, wo, out).transpose(0, 3, 1, 2), cols


def conv2d_backward(dy, cols, x_shape, w, stride, pad):
    bsz, cin, h, wd = x_shape
    out, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dyf = dy.transpose(0, 2, 3, 1).reshape(-1, out)
    dw = (dyf.T @ cols).reshape(w.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ w.reshape(out, -1)).reshape(bsz, ho, wo, cin, k, k)
    dxp = np.zeros((bsz, cin, h + 2 * pad, wd + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw, db


def conv_transpose2d(x, w, b, stride, pad, out_pad):
    """Transposed convolution. x (B,Ci,H,W), w (Ci,Co,k,k) -> (B,Co,Ho,Wo).

    ``Ho = (H - 1) * stride - 2 * pad + k + out_pad``.
    """
    bsz, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    ho = (h - 1) * stride - 2 * pad + k + out_pad
    wo = (wd - 1) * stride - 2 * pad + k + out_pad
    xf = x.transpose(0, 2, 3, 1).reshape(-1, cin)
    cols = (xf @ w.reshape(cin, -1)).reshape(bsz, h, wd, cout, k, k)
    full_h = max((h - 1) * stride + k, pad + ho)
    full_w = max((wd - 1) * stride + k, pad + wo)
    yp = np.zeros((bsz, cout, full_h, full_w))
    for i in range(k):
        for j in range(k):
            yp[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    y = yp[:, :, pad:pad + ho, pad:pad + wo]
    if b is not None:
        y = y + b[None, :, None, None]
    return y, xf


def conv_transpose2d_backward(dy, xf, x_shape, w, stride, pad):
    bsz, cin, h, wd = x_shape
    _, cout, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    full_h = max((h - 1) * stride + k, pad + ho)
    full_w = max((wd - 1) * stride + k, pad + wo)
    dyp = np.zeros((bsz, cout, full_h, full_w))
    dyp[:, :, pad:pad + ho, pad:pad + wo] = dy
    dcols = np.empty((bsz, h, wd, cout, k, k))
    for i in range(k):
        for j in range(k):
            dcols[:, :, :, :, i, j] = dyp[:, :, i:i + stride * h:stride, j:j + stride * wd:stride].transpose(0, 2, 3, 1)
    dcf = dcols.reshape(bsz * h * wd, -1)
    dw = (xf.T @ dcf).reshape(w.shape)
    dx = (dcf @ w.reshape(cin, -1).T).reshape(bsz, h, wd, cin).transpose(0, 3, 1, 2)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


# -- layers -------------------------------------------------------------------

def param_shapes(spec: LayerSpec) -> list[tuple]:
    k = spec.kernel
    if spec.kind == "dense":
        return [(spec.out_ch, spec.in_ch), (spec.out_ch,)]
    if spec.kind == "conv":
        return [(spec.out_ch, spec.in_ch, k, k), (spec.out_ch,)]
    if spec.kind == "transposed_conv":
        return [(spec.in_ch, spec.out_ch, k, k), (spec.out_ch,)]
    if spec.kind == "batch_norm":
        return [(spec.out_ch,), (spec.out_ch,)]
    return []


BN_EPS = 1e-5


def layer_forward(spec: LayerSpec, p, x):
    kind = spec.kind
    if kind == "dense":
        w, b = p
        return x @ w.T + b, x
    if kind == "conv":
        w, b = p
        y, cols = conv2d(x, w, b, spec.stride, spec.padding)
        return y, (cols, x.shape)
    if kind == "transposed_conv":
        w, b = p
        y, xf = conv_transpose2d(x, w, b, spec.stride, spec.padding, spec.output_padding)
        return y, (xf, x.shape)
    if kind == "batch_norm":
        gamma, beta = p
        axes = (0, 2, 3) if x.ndim == 4 else (0,)
        mu = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xh = (x - mu) * inv
        shape = (1, -1, 1, 1) if x.ndim == 4 else (1, -1)
        return gamma.reshape(shape) * xh + beta.reshape(shape), (xh, inv, axes, shape)
    if kind == "relu":
        return np.maximum(x, 0.0), x > 0
    if kind == "leaky_relu":
        pos = x > 0
        return np.where(pos, x, spec.leaky_slope * x), pos
    if kind == "tanh":
        y = np.tanh(x)
        return y, y
    if kind == "reshape":
        return x.reshape((x.shape[0],) + tuple(spec.shape)), x.shape
    if kind == "flatten":
        return x.reshape(x.shape[0], -1), x.shape
    raise ValueError(kind)


def layer_backward(spec: LayerSpec, p, cache, dy):
    """Return ``(dx, [dparam, ...])``."""
    kind = spec.kind
    if kind == "dense":
        w, _ = p
        x = cache
        return dy @ w, [dy.T @ x, dy.sum(axis=0)]
    if kind == "conv":
        cols, xs = cache
        dx, dw, db = conv2d_backward(dy, cols, xs, p[0], spec.stride, spec.padding)
        return dx, [dw, db]
    if kind == "transposed_conv":
        xf, xs = cache
        dx, dw, db = conv_transpose2d_backward(dy, xf, xs, p[0], spec.stride, spec.padding)
        return dx, [dw, db]
    if kind == "batch_norm":
        gamma, _ = p
        xh, inv, axes, shape = cache
        m = dy.size / dy.shape[1]
        dgamma = np.sum(dy * xh, axis=axes)
        dbeta = np.sum(dy, axis=axes)
        g = gamma.reshape(shape) * inv
        dx = g / m * (m * dy - dbeta.reshape(shape) - xh * dgamma.reshape(shape))
        return dx, [dgamma, dbeta]
    if kind == "relu":
        return dy * cache, []
    if kind == "leaky_relu":
        return np.where(cache, dy, spec.leaky_slope * dy), []
    if kind == "tanh":
        return dy * (1.0 - cache * cache), []
    if kind in ("reshape", "flatten"):
        return dy.reshape(cache), []
    raise ValueError(kind)


class Net:
    """Sequential network over a flat float parameter vector."""

    def __init__(self, specs):
        self.specs = list(specs)
        self.slices = []
        off = 0
        for spec in self.specs:
            entries = []
            for shape in param_shapes(spec):
                size = int(np.prod(shape))
                entries.append((off, size, shape))
                off += size
            self.slices.append(entries)
        self.n_params = off

    def unpack(self, flat):
        flat = np.asarray(flat)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        return [[flat[o:o + s].reshape(shape) for o, s, shape in entries] for entries in self.slices]

    def init(self, rng, std: float = 0.02) -> np.ndarray:
        """Gaussian weights, zero biases, unit batch-norm scales."""
        flat = np.zeros(self.n_params)
        for spec, entries in zip(self.specs, self.slices):
            if not entries:
                continue
            (o0, s0, _), (o1, s1, _) = entries
            if spec.kind == "batch_norm":
                flat[o0:o0 + s0] = 1.0
            else:
                flat[o0:o0 + s0] = rng.normal(0.0, std, s0)
        return flat

    def forward(self, flat, x):
        params = self.unpack(np.asarray(flat, dtype=np.float64))
        caches = []
        for spec, p in zip(self.specs, params):
            x, cache = layer_forward(spec, p, x)
            caches.append(cache)
        return x, caches

    def __call__(self, flat, x):
        return self.forward(flat, x)[0]

    def backward(self, flat, caches, dy):
        """Return ``(dx, grad)`` where ``grad`` matches the flat layout."""
        params = self.unpack(np.asarray(flat, dtype=np.float64))
        grad = np.zeros(self.n_params)
        for spec, p, cache, entries in zip(reversed(self.specs), reversed(params), reversed(caches),
                                           reversed(self.slices)):
            dy, dps = layer_backward(spec, p, cache, dy)
            for (o, s, _), dp in zip(entries, dps):
                grad[o:o + s] = dp.reshape(-1)
        return dy, grad

    def layer_offsets(self):
        return [entries[0][0] if entries else None for entries in self.slices]


class Adam:
    """Adaptive moment estimation over flat vectors (stateless helper)."""

    def __init__(self, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, params, grad, m, v, t):
        """Return updated ``(params, m, v)``; ``t`` is the 1-based step count."""
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        mhat = m / (1.0 - self.beta1 ** t)
        vhat = v / (1.0 - self.beta2 ** t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps), m, v
