"""Dense numeric kernel: layer primitives with explicit forward and backward passes.

Everything here operates on plain numpy arrays (row-major, float32 or float64)
and is pure: no graphs, no tapes, no global state. Each backward pass returns
the exact analytic gradient of its forward pass, which keeps every op directly
checkable against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DimensionError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_SQRT1_2 = math.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def ensure_tensor(data, dtype=None) -> np.ndarray:
    """Coerce external input to a contiguous float array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


@dataclass
class LayerGrads:
    """Gradients of one layer: w.r.t. its input and each named parameter."""

    d_input: np.ndarray
    d_params: list[tuple[str, np.ndarray]]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DimensionError(msg)


# ---------------------------------------------------------------------------
# linear


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map of row vectors: out[b] = x[b] @ weight + bias."""
    _require(x.ndim == 2, f"linear input must be 2-D, got shape {x.shape}")
    _require(weight.ndim == 2 and bias.ndim == 1, "weight must be 2-D and bias 1-D")
    _require(x.shape[1] == weight.shape[0],
             f"input width {x.shape[1]} != weight rows {weight.shape[0]}")
    _require(weight.shape[1] == bias.shape[0],
             f"weight cols {weight.shape[1]} != bias length {bias.shape[0]}")
    return x @ weight + bias


def linear_backward(x: np.ndarray, weight: np.ndarray, d_out: np.ndarray) -> LayerGrads:
    """Gradients of linear_forward w.r.t. input, weight and bias."""
    _require(d_out.shape == (x.shape[0], weight.shape[1]),
             f"d_out shape {d_out.shape} != ({x.shape[0]}, {weight.shape[1]})")
    d_input = d_out @ weight.T
    d_weight = x.T @ d_out
    d_bias = d_out.sum(axis=0)
    return LayerGrads(d_input, [("weight", d_weight), ("bias", d_bias)])


# ---------------------------------------------------------------------------
# 1-D convolution (cross-correlation convention, zero padding)


def conv1d_output_length(t: int, width: int, stride: int, padding: int) -> int:
    _require(width >= 1 and stride >= 1 and padding >= 0, "bad conv hyperparameters")
    _require(t + 2 * padding >= width,
             f"kernel width {width} exceeds padded length {t + 2 * padding}")
    return (t + 2 * padding - width) // stride + 1


def _sliding_windows(xp: np.ndarray, width: int, stride: int, t_out: int) -> np.ndarray:
    """View of xp (B,C,Tp) as (B,C,t_out,width) without copying."""
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, t_out, width), strides=(s0, s1, s2 * stride, s2))


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                   stride: int = 1, padding: int = 0) -> np.ndarray:
    """Batched 1-D cross-correlation.

    out[b,k,t] = bias[k] + sum_{c,w} x[b,c,t*stride + w - padding] * kernels[k,c,w]
    with zero-padded out-of-range reads.
    """
    _require(x.ndim == 3, f"conv input must be 3-D (B,C,T), got {x.shape}")
    _require(kernels.ndim == 3, f"kernels must be 3-D (K,C,W), got {kernels.shape}")
    batch, channels, t = x.shape
    k, kc, width = kernels.shape
    _require(kc == channels, f"kernel channels {kc} != input channels {channels}")
    _require(bias.shape == (k,), f"bias shape {bias.shape} != ({k},)")
    t_out = conv1d_output_length(t, width, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _sliding_windows(xp, width, stride, t_out)
    # (B, t_out, C*W) @ (C*W, K) -> (B, t_out, K)
    flat = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(batch, t_out, channels * width)
    out = flat @ kernels.reshape(k, channels * width).T
    return out.transpose(0, 2, 1) + bias[None, :, None]


def conv1d_backward(x: np.ndarray, kernels: np.ndarray, d_out: np.ndarray,
                    stride: int = 1, padding: int = 0) -> LayerGrads:
    """Gradients of conv1d_forward w.r.t. input, kernels and bias."""
    batch, channels, t = x.shape
    k, _, width = kernels.shape
    t_out = conv1d_output_length(t, width, stride, padding)
    _require(d_out.shape == (batch, k, t_out),
             f"d_out shape {d_out.shape} != ({batch}, {k}, {t_out})")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _sliding_windows(xp, width, stride, t_out)

    d_bias = d_out.sum(axis=(0, 2))
    flat_cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(batch * t_out, channels * width)
    flat_dout = np.ascontiguousarray(d_out.transpose(0, 2, 1)).reshape(batch * t_out, k)
    d_kernels = (flat_dout.T @ flat_cols).reshape(k, channels, width)

    d_cols = (flat_dout @ kernels.reshape(k, channels * width)).reshape(batch, t_out, channels, width)
    d_xp = np.zeros_like(xp)
    for w in range(width):
        stop = w + (t_out - 1) * stride + 1
        d_xp[:, :, w:stop:stride] += d_cols[:, :, :, w].transpose(0, 2, 1)
    d_input = d_xp[:, :, padding:padding + t] if padding else d_xp
    return LayerGrads(d_input, [("weight", d_kernels), ("bias", d_bias)])


# ---------------------------------------------------------------------------
# activations


def activation(x: np.ndarray, mode: str) -> np.ndarray:
    """Elementwise nonlinearity; gelu uses the exact Gaussian-CDF form."""
    if mode == "relu":
        return np.maximum(x, 0)
    if mode == "gelu":
        return 0.5 * x * (1.0 + erf(x * _SQRT1_2))
    raise ValueError(f"unknown activation mode {mode!r}")


def activation_backward(x: np.ndarray, d_out: np.ndarray, mode: str) -> np.ndarray:
    """Gradient of activation w.r.t. x (relu uses subgradient 0 at x == 0)."""
    _require(d_out.shape == x.shape, f"d_out shape {d_out.shape} != x shape {x.shape}")
    if mode == "relu":
        return d_out * (x > 0)
    if mode == "gelu":
        cdf = 0.5 * (1.0 + erf(x * _SQRT1_2))
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return d_out * (cdf + x * pdf)
    raise ValueError(f"unknown activation mode {mode!r}")


# ---------------------------------------------------------------------------
# pooling over non-overlapping windows (trailing partial window dropped)


def _pool_windows(x: np.ndarray, window: int) -> np.ndarray:
    _require(x.ndim == 3, f"pool input must be 3-D (B,C,T), got {x.shape}")
    _require(window >= 1, "pool window must be >= 1")
    t = x.shape[2]
    _require(window <= t, f"pool window {window} exceeds length {t}")
    t_out = t // window
    return x[:, :, :t_out * window].reshape(x.shape[0], x.shape[1], t_out, window)


def pool1d(x: np.ndarray, window: int, mode: str) -> np.ndarray:
    """Mean or max over non-overlapping windows along the last axis."""
    win = _pool_windows(x, window)
    if mode == "mean":
        return win.mean(axis=3)
    if mode == "max":
        return win.max(axis=3)
    raise ValueError(f"unknown pool mode {mode!r}")


def pool1d_backward(x: np.ndarray, window: int, mode: str, d_out: np.ndarray) -> np.ndarray:
    """Gradient of pool1d w.r.t. x; max routes to the first maximum per window."""
    win = _pool_windows(x, window)
    _require(d_out.shape == win.shape[:3],
             f"d_out shape {d_out.shape} != {win.shape[:3]}")
    d_win = np.zeros_like(win)
    if mode == "mean":
        d_win += (d_out / window)[:, :, :, None]
    elif mode == "max":
        arg = win.argmax(axis=3)
        np.put_along_axis(d_win, arg[:, :, :, None], d_out[:, :, :, None], axis=3)
    else:
        raise ValueError(f"unknown pool mode {mode!r}")
    d_x = np.zeros_like(x)
    t_used = d_win.shape[2] * window
    d_x[:, :, :t_used] = d_win.reshape(x.shape[0], x.shape[1], t_used)
    return d_x


# ---------------------------------------------------------------------------
# softmax cross-entropy


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    _require(logits.ndim == 2, f"logits must be 2-D, got {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of row-wise softmax against integer targets.

    Returns (loss, d_logits) where d_logits[b] = (softmax(logits[b]) -
    onehot(targets[b])) / B. The loss is computed on max-shifted logits so a
    row of equal logits yields exactly log(N).
    """
    _require(logits.ndim == 2, f"logits must be 2-D, got {logits.shape}")
    batch, n = logits.shape
    t = np.asarray(targets, dtype=np.intp)
    _require(t.shape == (batch,), f"need {batch} targets, got shape {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= n):
        raise IndexError(f"target index out of range for {n} columns")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(batch), t]
    d_logits = softmax(logits)
    d_logits[np.arange(batch), t] -= 1.0
    d_logits /= batch
    return float(losses.mean()), d_logits
