"""Recurrent cells (vanilla, LSTM, GRU) with backpropagation through time.

Conventions, batch-first throughout:
  x_t: (B, d)   h, c: (B, h)   weights W: (d, G*h), U: (h, G*h), b: (G*h,)
with G gates per kind. Gate order gru = [update z, reset r, candidate],
lstm = [input i, forget f, output o, candidate g]. The GRU mixes as
h' = z * h + (1 - z) * h_tilde.

Padded batches carry a (B, L) 0/1 mask; masked steps carry state through
unchanged, so the state after the last step is each sequence's state at
its true final timestep.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .nn import init_weights, sigmoid

GATES = {"vanilla": 1, "gru": 3, "lstm": 4}


def init_cell_params(kind: str, input_dim: int, hidden: int,
                     rng: np.random.Generator, dtype=np.float64) -> dict:
    g = GATES[kind]
    return {
        "W": init_weights((input_dim, g * hidden), "glorot_uniform", rng, dtype),
        "U": init_weights((hidden, g * hidden), "glorot_uniform", rng, dtype),
        "b": init_weights((g * hidden,), "zeros", rng, dtype),
    }


def cell_param_count(kind: str, input_dim: int, hidden: int) -> int:
    return GATES[kind] * (hidden * (input_dim + hidden) + hidden)


def _check_shapes(kind, params, x_t, h):
    g = GATES[kind]
    d, gh = params["W"].shape
    if gh != g * h.shape[1] or x_t.shape[1] != d or params["U"].shape != (h.shape[1], gh):
        raise ShapeMismatch(
            f"{kind} cell: x{x_t.shape}, h{h.shape}, W{params['W'].shape}, U{params['U'].shape}"
        )


# --- vanilla -----------------------------------------------------------


def vanilla_forward(params, x_t, h):
    _check_shapes("vanilla", params, x_t, h)
    h2 = np.tanh(x_t @ params["W"] + h @ params["U"] + params["b"])
    return h2, (x_t, h, h2)


def vanilla_backward(params, cache, dh2):
    x_t, h, h2 = cache
    da = dh2 * (1.0 - h2 * h2)
    grads = {"W": x_t.T @ da, "U": h.T @ da, "b": da.sum(axis=0)}
    return grads, da @ params["W"].T, da @ params["U"].T


# --- GRU ---------------------------------------------------------------


def gru_forward(params, x_t, h):
    _check_shapes("gru", params, x_t, h)
    n = h.shape[1]
    xw = x_t @ params["W"] + params["b"]
    uz, ur, uc = params["U"][:, :n], params["U"][:, n : 2 * n], params["U"][:, 2 * n :]
    z = sigmoid(xw[:, :n] + h @ uz)
    r = sigmoid(xw[:, n : 2 * n] + h @ ur)
    rh = r * h
    c = np.tanh(xw[:, 2 * n :] + rh @ uc)
    h2 = z * h + (1.0 - z) * c
    return h2, (x_t, h, z, r, rh, c)


def gru_backward(params, cache, dh2):
    x_t, h, z, r, rh, c = cache
    n = h.shape[1]
    uz, ur, uc = params["U"][:, :n], params["U"][:, n : 2 * n], params["U"][:, 2 * n :]

    dz = dh2 * (h - c)
    dc = dh2 * (1.0 - z)
    dh = dh2 * z

    da_c = dc * (1.0 - c * c)
    drh = da_c @ uc.T
    dr = drh * h
    dh = dh + drh * r

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    da = np.concatenate([da_z, da_r, da_c], axis=1)
    grads = {
        "W": x_t.T @ da,
        "U": np.concatenate([h.T @ da_z, h.T @ da_r, rh.T @ da_c], axis=1),
        "b": da.sum(axis=0),
    }
    dh = dh + da_z @ uz.T + da_r @ ur.T
    dx = da @ params["W"].T
    return grads, dx, dh


# --- LSTM --------------------------------------------------------------


def lstm_forward(params, x_t, state):
    h, c = state
    _check_shapes("lstm", params, x_t, h)
    n = h.shape[1]
    a = x_t @ params["W"] + h @ params["U"] + params["b"]
    i = sigmoid(a[:, :n])
    f = sigmoid(a[:, n : 2 * n])
    o = sigmoid(a[:, 2 * n : 3 * n])
    g = np.tanh(a[:, 3 * n :])
    c2 = f * c + i * g
    tc2 = np.tanh(c2)
    h2 = o * tc2
    return (h2, c2), (x_t, h, c, i, f, o, g, tc2)


def lstm_backward(params, cache, dh2, dc2):
    x_t, h, c, i, f, o, g, tc2 = cache
    do = dh2 * tc2
    dc = dc2 + dh2 * o * (1.0 - tc2 * tc2)
    di = dc * g
    df = dc * c
    dg = dc * i
    dc_prev = dc * f

    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)],
        axis=1,
    )
    grads = {"W": x_t.T @ da, "U": h.T @ da, "b": da.sum(axis=0)}
    dx = da @ params["W"].T
    dh_prev = da @ params["U"].T
    return grads, dx, dh_prev, dc_prev


def cell_step(kind: str, params: dict, x_t: np.ndarray, state):
    """Advance one timestep; state is h for vanilla/gru and (h, c) for lstm."""
    if kind == "vanilla":
        return vanilla_forward(params, x_t, state)[0]
    if kind == "gru":
        return gru_forward(params, x_t, state)[0]
    if kind == "lstm":
        return lstm_forward(params, x_t, state)[0]
    raise ValueError(f"unknown cell kind {kind!r}")


# --- unrolled sequence passes -------------------------------------------


def run_sequence(kind: str, params: dict, x: np.ndarray, mask=None):
    """Run a cell over x (B, L, d); returns (final h (B, n), caches).

    With a mask, steps where mask[:, t] == 0 leave the state untouched.
    """
    b, length, _ = x.shape
    n = params["U"].shape[0]
    h = np.zeros((b, n), dtype=x.dtype)
    c = np.zeros((b, n), dtype=x.dtype) if kind == "lstm" else None
    caches = []
    for t in range(length):
        m = None if mask is None else mask[:, t : t + 1]
        if kind == "lstm":
            (h_new, c_new), cache = lstm_forward(params, x[:, t], (h, c))
            if m is not None:
                h_new = m * h_new + (1.0 - m) * h
                c_new = m * c_new + (1.0 - m) * c
            caches.append((cache, m))
            h, c = h_new, c_new
        else:
            fwd = gru_forward if kind == "gru" else vanilla_forward
            h_new, cache = fwd(params, x[:, t], h)
            if m is not None:
                h_new = m * h_new + (1.0 - m) * h
            caches.append((cache, m))
            h = h_new
    return h, caches


def run_sequence_backward(kind: str, params: dict, caches, dh_final):
    """BPTT through run_sequence; returns (param grads, dx (B, L, d))."""
    length = len(caches)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dh = dh_final.copy()
    dc = np.zeros_like(dh) if kind == "lstm" else None
    dx_steps = [None] * length
    for t in range(length - 1, -1, -1):
        cache, m = caches[t]
        if kind == "lstm":
            dh_new = dh if m is None else dh * m
            dc_new = dc if m is None else dc * m
            g, dx_t, dh_prev, dc_prev = lstm_backward(params, cache, dh_new, dc_new)
            if m is not None:
                dh_prev = dh_prev + dh * (1.0 - m)
                dc_prev = dc_prev + dc * (1.0 - m)
            dh, dc = dh_prev, dc_prev
        else:
            bwd = gru_backward if kind == "gru" else vanilla_backward
            dh_new = dh if m is None else dh * m
            g, dx_t, dh_prev = bwd(params, cache, dh_new)
            if m is not None:
                dh_prev = dh_prev + dh * (1.0 - m)
            dh = dh_prev
        for k in grads:
            grads[k] += g[k]
        dx_steps[t] = dx_t
    return grads, np.stack(dx_steps, axis=1)


def reverse_padded(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each row of (B, L, d) within its true length, padding fixed."""
    out = np.zeros_like(x)
    for i, n in enumerate(lengths):
        out[i, :n] = x[i, :n][::-1]
    return out
