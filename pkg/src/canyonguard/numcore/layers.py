"""Dense-tensor layer math: conv2d, dense, and activation forward/backward.

Tensors are plain numpy arrays, row-major. Parameters and activations are
float32 in production; every op preserves the input dtype so verification
passes can run the same code paths in float64. Batched variants (leading N
axis) carry the training fast path, the unbatched functions are the public
single-sample surface and validate shapes/finiteness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, NumericalFault

ACTIVATION_KINDS = ("relu", "tanh", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a perception stack: conv2d, dense, or a pointwise activation."""

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    in_dim: int = 0
    out_dim: int = 0
    activation: str = ""

    def __post_init__(self):
        if self.kind == "conv2d":
            if self.kernel_size <= 0 or self.stride <= 0:
                raise ConfigurationError("conv2d kernel_size and stride must be positive")
            if self.in_channels <= 0 or self.out_channels <= 0:
                raise ConfigurationError("conv2d channel counts must be positive")
            if self.padding < 0:
                raise ConfigurationError("conv2d padding must be non-negative")
        elif self.kind == "dense":
            if self.in_dim <= 0 or self.out_dim <= 0:
                raise ConfigurationError("dense dims must be positive")
        elif self.kind == "activation":
            if self.activation not in ACTIVATION_KINDS:
                raise ConfigurationError(f"unknown activation {self.activation!r}")
        else:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")

    @staticmethod
    def conv2d(in_channels, out_channels, kernel_size, stride=1, padding=0) -> "LayerSpec":
        return LayerSpec(kind="conv2d", in_channels=in_channels, out_channels=out_channels,
                         kernel_size=kernel_size, stride=stride, padding=padding)

    @staticmethod
    def dense(in_dim, out_dim) -> "LayerSpec":
        return LayerSpec(kind="dense", in_dim=in_dim, out_dim=out_dim)

    @staticmethod
    def act(activation) -> "LayerSpec":
        return LayerSpec(kind="activation", activation=activation)

    def conv_output_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel_size, self.stride, self.padding
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho <= 0 or wo <= 0:
            raise ConfigurationError(
                f"conv2d output size {ho}x{wo} not positive for input {h}x{w} "
                f"(kernel {k}, stride {s}, padding {p})")
        return ho, wo


def ensure_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalFault(f"non-finite values in {what}")
    return arr


# ---------------------------------------------------------------------------
# stable pointwise helpers

def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    x = np.asarray(x)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0)


def act_forward(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


def act_backward(x: np.ndarray, upstream: np.ndarray, kind: str) -> np.ndarray:
    """Gradient through an activation given its *input* x."""
    if kind == "relu":
        return upstream * (x > 0)
    if kind == "tanh":
        t = np.tanh(x)
        return upstream * (1.0 - t * t)
    if kind == "sigmoid":
        s = sigmoid(x)
        return upstream * s * (1.0 - s)
    raise ConfigurationError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# conv2d (cross-correlation) via im2col

def _im2col(x: np.ndarray, k: int, s: int, p: int) -> np.ndarray:
    """[N,C,H,W] -> [N, C*k*k, Ho*Wo] patch matrix."""
    n, c, h, w = x.shape
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i:i + ho * s:s, j:j + wo * s:s]
    return cols.reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, x_shape, k: int, s: int, p: int) -> np.ndarray:
    """Scatter-add inverse of _im2col."""
    n, c, h, w = x_shape
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + ho * s:s, j:j + wo * s:s] += cols6[:, :, i, j]
    return xp[:, :, p:p + h, p:p + w]


def _check_conv_shapes(x, spec, weights, bias):
    if spec.kind != "conv2d":
        raise ConfigurationError(f"expected conv2d spec, got {spec.kind!r}")
    c, h, w = x.shape[-3], x.shape[-2], x.shape[-1]
    if c != spec.in_channels:
        raise ConfigurationError(
            f"input has {c} channels, spec expects {spec.in_channels}")
    k = spec.kernel_size
    if weights.shape != (spec.out_channels, spec.in_channels, k, k):
        raise ConfigurationError(
            f"weights shape {weights.shape} != {(spec.out_channels, spec.in_channels, k, k)}")
    if bias.shape != (spec.out_channels,):
        raise ConfigurationError(f"bias shape {bias.shape} != ({spec.out_channels},)")
    spec.conv_output_hw(h, w)


def conv2d_forward_batch(x: np.ndarray, spec: LayerSpec, weights: np.ndarray,
                         bias: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    ho, wo = spec.conv_output_hw(h, w)
    cols = _im2col(x, k, s, p)
    wmat = weights.reshape(spec.out_channels, -1)
    out = np.matmul(wmat, cols) + bias.reshape(1, -1, 1)
    return out.reshape(n, spec.out_channels, ho, wo)


def conv2d_forward(x: np.ndarray, spec: LayerSpec, weights: np.ndarray,
                   bias: np.ndarray) -> np.ndarray:
    """Cross-correlation with bias over a single [C,H,W] input."""
    if x.ndim != 3:
        raise ConfigurationError(f"conv2d input must be [C,H,W], got shape {x.shape}")
    _check_conv_shapes(x, spec, weights, bias)
    out = conv2d_forward_batch(x[None], spec, weights, bias)[0]
    return ensure_finite(out, "conv2d output")


def conv2d_backward_batch(x, spec, weights, upstream):
    n = x.shape[0]
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    cols = _im2col(x, k, s, p)
    g = upstream.reshape(n, spec.out_channels, -1)
    grad_b = g.sum(axis=(0, 2))
    grad_w = np.einsum("nop,nqp->oq", g, cols).reshape(weights.shape)
    wmat = weights.reshape(spec.out_channels, -1)
    grad_cols = np.matmul(wmat.T, g)
    grad_x = _col2im(grad_cols, x.shape, k, s, p)
    return grad_x, grad_w, grad_b


def conv2d_backward(x: np.ndarray, spec: LayerSpec, weights: np.ndarray,
                    upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of conv2d_forward w.r.t. input, weights, bias."""
    if x.ndim != 3:
        raise ConfigurationError(f"conv2d input must be [C,H,W], got shape {x.shape}")
    _check_conv_shapes(x, spec, weights, np.zeros(spec.out_channels, dtype=x.dtype))
    ho, wo = spec.conv_output_hw(x.shape[1], x.shape[2])
    if upstream.shape != (spec.out_channels, ho, wo):
        raise ConfigurationError(
            f"upstream shape {upstream.shape} != {(spec.out_channels, ho, wo)}")
    gx, gw, gb = conv2d_backward_batch(x[None], spec, weights, upstream[None])
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# dense

def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """weights @ x + bias for a single vector x."""
    if x.ndim != 1:
        raise ConfigurationError(f"dense input must be a vector, got shape {x.shape}")
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ConfigurationError(
            f"weights shape {weights.shape} incompatible with input length {x.shape[0]}")
    if bias.shape != (weights.shape[0],):
        raise ConfigurationError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    return ensure_finite(weights @ x + bias, "dense output")


def dense_backward(x: np.ndarray, weights: np.ndarray,
                   upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if upstream.shape != (weights.shape[0],):
        raise ConfigurationError(
            f"upstream shape {upstream.shape} != ({weights.shape[0]},)")
    grad_x = weights.T @ upstream
    grad_w = np.outer(upstream, x)
    grad_b = upstream.copy()
    return grad_x, grad_w, grad_b


def dense_forward_batch(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weights.T + bias


def dense_backward_batch(x, weights, upstream):
    grad_x = upstream @ weights
    grad_w = upstream.T @ x
    grad_b = upstream.sum(axis=0)
    return grad_x, grad_w, grad_b
