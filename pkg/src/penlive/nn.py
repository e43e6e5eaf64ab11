"""Self-contained neural-network substrate with hand-derived gradients.

Everything operates on plain float64/float32 numpy arrays (row-major); a
"tensor" here is just an ndarray. Layers come in forward/backward pairs:
forward returns (output, cache), backward consumes the cache plus the
upstream gradient and returns parameter and input gradients. No autodiff;
`grad_check` verifies every analytic gradient against central finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ShapeMismatch

ACTIVATIONS = ("relu", "sigmoid", "tanh", "none")


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def act_forward(z, kind: str):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "none":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def act_backward(y, dy, kind: str):
    """Gradient through an activation given its output y."""
    if kind == "relu":
        return dy * (y > 0)
    if kind == "sigmoid":
        return dy * y * (1.0 - y)
    if kind == "tanh":
        return dy * (1.0 - y * y)
    if kind == "none":
        return dy
    raise ValueError(f"unknown activation {kind!r}")


def init_weights(shape, scheme: str, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Glorot-uniform or zero initialization.

    Glorot draws U(-L, L) with L = sqrt(6 / (fan_in + fan_out)); fans for
    conv filters (F, C, kh, kw) count the full receptive field.
    """
    shape = tuple(int(v) for v in shape)
    if scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if scheme != "glorot_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 4:
        f, c, kh, kw = shape
        fan_in, fan_out = c * kh * kw, f * kh * kw
    elif len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        raise ValueError(f"unsupported shape {shape} for glorot init")
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# dense


def dense_forward(x, W, b, activation: str = "none"):
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"dense got x{x.shape}, W{W.shape}, b{b.shape}")
    y = act_forward(x @ W + b, activation)
    return y, (x, W, y, activation)


def dense_backward(cache, dy):
    x, W, y, activation = cache
    dz = act_backward(y, dy, activation)
    dW = x.T @ dz
    db = dz.sum(axis=0) if dz.ndim > 1 else dz
    dx = dz @ W.T
    return dW, db, dx


def dense_apply(W, b, x, activation: str = "none"):
    """y = act(x W + b); see dense_forward/dense_backward for gradients."""
    y, _ = dense_forward(np.asarray(x, dtype=W.dtype), W, b, activation)
    return y


# ---------------------------------------------------------------------------
# convolution (3x3 kernels, stride 1, valid padding) and pooling


def _im2col(x, kh, kw):
    """(B, C, H, W) -> contiguous (B*OH*OW, C*kh*kw) column matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5)  # (B, OH, OW, C, kh, kw)
    b, oh, ow = cols.shape[:3]
    return np.ascontiguousarray(cols).reshape(b * oh * ow, -1), oh, ow


def conv2d_forward(x, filters, bias, activation: str = "relu", need_dx: bool = True):
    """Valid 2-D correlation as a single im2col GEMM.

    x: (B, C, H, W), filters: (F, C, kh, kw). Pass need_dx=False on the
    first layer to skip the input-gradient work in the backward pass.
    """
    if x.ndim != 4 or filters.ndim != 4 or x.shape[1] != filters.shape[1]:
        raise ShapeMismatch(f"conv got x{x.shape}, filters{filters.shape}")
    f, c, kh, kw = filters.shape
    if bias.shape != (f,):
        raise ShapeMismatch(f"conv bias shape {bias.shape}, expected ({f},)")
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ShapeMismatch(f"input {x.shape} smaller than kernel ({kh}x{kw})")
    cols, oh, ow = _im2col(x, kh, kw)
    w_flat = filters.reshape(f, -1)               # (F, C*kh*kw), contiguous
    z = (cols @ w_flat.T + bias).reshape(x.shape[0], oh, ow, f)
    y = act_forward(z, activation).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), (x.shape, cols, w_flat, y, activation, (kh, kw), need_dx)


def conv2d_backward(cache, dy):
    x_shape, cols, w_flat, y, activation, (kh, kw), need_dx = cache
    dz = act_backward(y, dy, activation).transpose(0, 2, 3, 1)   # (B, OH, OW, F)
    b, oh, ow, f = dz.shape
    dz2 = np.ascontiguousarray(dz).reshape(-1, f)
    dbias = dz2.sum(axis=0)
    dfilters = (dz2.T @ cols).reshape(f, x_shape[1], kh, kw)
    if not need_dx:
        return dfilters, dbias, None
    c = x_shape[1]
    dcols = (dz2 @ w_flat).reshape(b, oh, ow, c, kh, kw)
    # accumulate channels-last, transpose once at the end
    dx_cl = np.zeros((b, x_shape[2], x_shape[3], c), dtype=dy.dtype)
    for di in range(kh):
        for dj in range(kw):
            dx_cl[:, di : di + oh, dj : dj + ow, :] += dcols[:, :, :, :, di, dj]
    return dfilters, dbias, np.ascontiguousarray(dx_cl.transpose(0, 3, 1, 2))


def conv_apply(filters, bias, img, activation: str = "relu"):
    """Feature maps for a single image (C, H, W) or batch (B, C, H, W)."""
    x = np.asarray(img, dtype=filters.dtype)
    single = x.ndim == 3
    if single:
        x = x[None]
    y, _ = conv2d_forward(x, filters, bias, activation)
    return y[0] if single else y


def gap_forward(x):
    """Global average pooling: (B, C, H, W) -> (B, C)."""
    if x.ndim != 4:
        raise ShapeMismatch(f"gap expects (B, C, H, W), got {x.shape}")
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(cache, dy):
    b, c, h, w = cache
    return np.broadcast_to((dy / (h * w))[:, :, None, None], (b, c, h, w)).copy()


def gap_apply(maps):
    """Per-channel spatial mean of (C, H, W) or (B, C, H, W) maps."""
    x = np.asarray(maps)
    if x.ndim == 3:
        return x.mean(axis=(1, 2))
    y, _ = gap_forward(x)
    return y


# ---------------------------------------------------------------------------
# dropout


def dropout_forward(x, q: float, mode: str, rng: Optional[np.random.Generator] = None):
    """Inverted dropout: zero with probability q, scale survivors by 1/(1-q)."""
    if not 0.0 <= q < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {q}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if mode == "eval" or q == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= q) / (1.0 - q)
    mask = mask.astype(x.dtype)
    return x * mask, mask


def dropout_backward(mask, dy):
    return dy if mask is None else dy * mask


def dropout_apply(x, q: float, mode: str, rng: Optional[np.random.Generator] = None):
    y, _ = dropout_forward(np.asarray(x), q, mode, rng)
    return y


# ---------------------------------------------------------------------------
# loss

P_CLIP = 1e-7


def bce_loss(p, y):
    """Binary cross-entropy and its gradient w.r.t. p.

    p is clipped into [1e-7, 1 - 1e-7]; the gradient is zero where the
    clip saturates, consistent with the clipped forward value.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    pc = np.clip(p_arr, P_CLIP, 1.0 - P_CLIP)
    loss = -(y_arr * np.log(pc) + (1.0 - y_arr) * np.log1p(-pc))
    grad = np.where(
        (p_arr > P_CLIP) & (p_arr < 1.0 - P_CLIP),
        (pc - y_arr) / (pc * (1.0 - pc)),
        0.0,
    )
    if np.isscalar(p) or p_arr.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class OptimizerState:
    """Bias-corrected Adam moments for one tensor plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "OptimizerState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), t=0)


def adam_update(param, grad, opt: OptimizerState, cfg) -> tuple[np.ndarray, OptimizerState]:
    """One bias-corrected Adam step; pure (returns new arrays and state)."""
    if param.shape != grad.shape or param.shape != opt.m.shape:
        raise ShapeMismatch(
            f"param {param.shape}, grad {grad.shape}, moments {opt.m.shape}"
        )
    t = opt.t + 1
    m = cfg.beta1 * opt.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * opt.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new_param = param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
    return new_param, OptimizerState(m=m, v=v, t=t)


def adam_step_params(params: dict, grads: dict, states: dict, cfg):
    """Apply adam_update across a named parameter dict; returns new dicts."""
    new_params = {}
    new_states = {}
    for name, p in params.items():
        new_params[name], new_states[name] = adam_update(p, grads[name], states[name], cfg)
    return new_params, new_states


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    loss_fn: Callable[[dict], tuple[float, dict]],
    params: dict,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(params) must return (scalar loss, grads dict matching params).
    Relative error per parameter is |a - n| / max(|a|, |n|, 1e-8).
    """
    _, analytic = loss_fn(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, _ = loss_fn(params)
            flat[idx] = orig - eps
            lm, _ = loss_fn(params)
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[idx] - numeric) / denom)
    return worst
