"""Dense-tensor layer operations: forward passes and analytic gradients.

All functions are pure: they never mutate their inputs, so they are safe to
call concurrently.  Arrays use the NHWC convention for images and float64
unless the caller supplies float32.  Convolution is cross-correlation with
valid padding.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def glorot_uniform_init(
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    shape: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Uniform draw from [-L, L] with L = sqrt(6 / (fan_in + fan_out)).

    ``shape`` defaults to ``(fan_in, fan_out)``; pass an explicit shape for
    convolution kernels or bias rows whose fans differ from their shape.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``x @ weights + bias`` for ``x`` of shape (B, p)."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"dense: input {x.shape} incompatible with weights {weights.shape}"
        )
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} != ({weights.shape[1]},)")
    return x @ weights + bias


def dense_backward(
    grad: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_weights, d_bias) for the upstream ``grad`` (B, q)."""
    if grad.ndim != 2 or grad.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(
            f"dense backward: grad {grad.shape} incompatible with "
            f"input {x.shape} and weights {weights.shape}"
        )
    dx = grad @ weights.T
    dw = x.T @ grad
    db = grad.sum(axis=0)
    return dx, dw, db


def _conv_check(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int):
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(
            f"conv2d: need (B,H,W,C) input and (kh,kw,C,O) kernels, "
            f"got {x.shape} and {kernels.shape}"
        )
    kh, kw, c_in, c_out = kernels.shape
    if x.shape[3] != c_in:
        raise ShapeError(f"conv2d: input channels {x.shape[3]} != kernel channels {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias {bias.shape} != ({c_out},)")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if kh > x.shape[1] or kw > x.shape[2]:
        raise ValueError(
            f"kernel {kh}x{kw} larger than input {x.shape[1]}x{x.shape[2]}"
        )


def _conv_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (B, OH, OW, C, kh, kw) view, no copy
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]


def conv2d_forward(
    x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Valid cross-correlation of NHWC input with (kh, kw, C_in, C_out) kernels."""
    _conv_check(x, kernels, bias, stride)
    kh, kw = kernels.shape[:2]
    win = _conv_windows(x, kh, kw, stride)
    return np.einsum("bijckl,klco->bijo", win, kernels, optimize=True) + bias


def conv2d_backward(
    grad: np.ndarray, x: np.ndarray, kernels: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_kernels, d_bias) of the valid cross-correlation."""
    kh, kw = kernels.shape[:2]
    win = _conv_windows(x, kh, kw, stride)
    oh, ow = win.shape[1], win.shape[2]
    if grad.shape != (x.shape[0], oh, ow, kernels.shape[3]):
        raise ShapeError(
            f"conv2d backward: grad {grad.shape} != {(x.shape[0], oh, ow, kernels.shape[3])}"
        )
    dk = np.einsum("bijckl,bijo->klco", win, grad, optimize=True)
    db = grad.sum(axis=(0, 1, 2))
    dx = np.zeros_like(x)
    for di in range(kh):
        for dj in range(kw):
            patch = np.einsum("bijo,co->bijc", grad, kernels[di, dj], optimize=True)
            dx[:, di : di + stride * oh : stride, dj : dj + stride * ow : stride, :] += patch
    return dx, dk, db


def gap_forward(x: np.ndarray) -> np.ndarray:
    """Global average pool: per-channel spatial mean of (B, H, W, C)."""
    if x.ndim != 4:
        raise ShapeError(f"gap: need (B,H,W,C) input, got {x.shape}")
    return x.mean(axis=(1, 2))


def gap_backward(grad: np.ndarray, input_shape: tuple[int, ...]) -> np.ndarray:
    """Spread the pooled gradient uniformly: each cell gets grad / (H*W)."""
    b, h, w, c = input_shape
    if grad.shape != (b, c):
        raise ShapeError(f"gap backward: grad {grad.shape} != {(b, c)}")
    return np.broadcast_to(grad[:, None, None, :] / (h * w), input_shape).copy()


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad * (x > 0.0)


def dropout_forward(
    x: np.ndarray,
    rate: float,
    rng: np.random.Generator | None = None,
    training: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: zero units with probability ``rate`` and scale
    survivors by 1/(1-rate) so inference needs no rescaling.

    Returns (output, mask); in inference mode the mask is all ones.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * mask / (1.0 - rate), mask


def dropout_backward(grad: np.ndarray, mask: np.ndarray, rate: float) -> np.ndarray:
    return grad * mask / (1.0 - rate)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Pull a gradient on probabilities back to the logits."""
    inner = np.sum(grad * probs, axis=-1, keepdims=True)
    return probs * (grad - inner)
