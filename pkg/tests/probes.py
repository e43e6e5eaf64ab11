"""Gradient-check probes: each builds (loss_fn, params) for one layer kind.

The scalar objective is a fixed random linear readout of the layer output,
which keeps gradient magnitudes well away from the finite-difference noise
floor. Used by test_nn and the acceptance gate.
"""

import numpy as np

from penlive import cells, nn


def probe_dense(rng):
    b, d_in, d_out = int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 6))
    act = rng.choice(["relu", "sigmoid", "tanh", "none"])
    x = rng.normal(size=(b, d_in))
    probe = rng.normal(size=(b, d_out))
    params = {
        "W": nn.init_weights((d_in, d_out), "glorot_uniform", rng),
        "b": rng.normal(size=d_out, scale=0.3),
    }

    def loss_fn(p):
        y, cache = nn.dense_forward(x, p["W"], p["b"], act)
        dW, db, _ = nn.dense_backward(cache, probe)
        return float(np.sum(y * probe)), {"W": dW, "b": db}

    return loss_fn, params


def _probe_cell(kind, rng):
    b = int(rng.integers(1, 4))
    d = int(rng.integers(1, 3))
    h = int(rng.integers(2, 6))
    length = int(rng.integers(2, 6))
    x = rng.normal(size=(b, length, d))
    lengths = rng.integers(1, length + 1, size=b)
    mask = (np.arange(length)[None, :] < lengths[:, None]).astype(np.float64)
    probe = rng.normal(size=(b, h))
    params = cells.init_cell_params(kind, d, h, rng)
    params["b"] = rng.normal(size=params["b"].shape, scale=0.2)

    def loss_fn(p):
        h_last, caches = cells.run_sequence(kind, p, x, mask)
        grads, _ = cells.run_sequence_backward(kind, p, caches, probe)
        return float(np.sum(h_last * probe)), grads

    return loss_fn, params


def probe_vanilla(rng):
    return _probe_cell("vanilla", rng)


def probe_gru(rng):
    return _probe_cell("gru", rng)


def probe_lstm(rng):
    return _probe_cell("lstm", rng)


def probe_bidirectional(rng):
    """Forward + reversed backward cell, concatenated final states."""
    kind = rng.choice(["vanilla", "gru", "lstm"])
    b = int(rng.integers(1, 4))
    h = int(rng.integers(2, 5))
    length = int(rng.integers(2, 6))
    x = rng.normal(size=(b, length, 1))
    lengths = rng.integers(1, length + 1, size=b)
    mask = (np.arange(length)[None, :] < lengths[:, None]).astype(np.float64)
    probe = rng.normal(size=(b, 2 * h))
    params = {}
    for prefix in ("fwd", "bwd"):
        for k, v in cells.init_cell_params(kind, 1, h, rng).items():
            params[f"{prefix}.{k}"] = v

    def loss_fn(p):
        p_f = {k: p[f"fwd.{k}"] for k in ("W", "U", "b")}
        p_b = {k: p[f"bwd.{k}"] for k in ("W", "U", "b")}
        x_rev = cells.reverse_padded(x, lengths)
        h_f, c_f = cells.run_sequence(kind, p_f, x, mask)
        h_b, c_b = cells.run_sequence(kind, p_b, x_rev, mask)
        loss = float(np.sum(np.concatenate([h_f, h_b], axis=1) * probe))
        g_f, _ = cells.run_sequence_backward(kind, p_f, c_f, probe[:, :h])
        g_b, _ = cells.run_sequence_backward(kind, p_b, c_b, probe[:, h:])
        grads = {f"fwd.{k}": v for k, v in g_f.items()}
        grads.update({f"bwd.{k}": v for k, v in g_b.items()})
        return loss, grads

    return loss_fn, params


def probe_conv(rng):
    b = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    f = int(rng.integers(1, 4))
    size = int(rng.integers(4, 8))
    act = rng.choice(["relu", "tanh", "none"])
    x = rng.normal(size=(b, c, size, size))
    probe = rng.normal(size=(b, f, size - 2, size - 2))
    params = {
        "F": nn.init_weights((f, c, 3, 3), "glorot_uniform", rng),
        "b": rng.normal(size=f, scale=0.3),
    }

    def loss_fn(p):
        y, cache = nn.conv2d_forward(x, p["F"], p["b"], act)
        dF, db, _ = nn.conv2d_backward(cache, probe)
        return float(np.sum(y * probe)), {"F": dF, "b": db}

    return loss_fn, params


def probe_gap(rng):
    """GAP checked through a conv layer so a parameter carries its gradient."""
    b = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    size = int(rng.integers(4, 8))
    x = rng.normal(size=(b, c, size, size))
    f = int(rng.integers(1, 4))
    probe = rng.normal(size=(b, f))
    params = {"F": nn.init_weights((f, c, 3, 3), "glorot_uniform", rng),
              "b": np.zeros(f)}

    def loss_fn(p):
        maps, conv_cache = nn.conv2d_forward(x, p["F"], p["b"], "none")
        pooled, gap_cache = nn.gap_forward(maps)
        dmaps = nn.gap_backward(gap_cache, probe)
        dF, db, _ = nn.conv2d_backward(conv_cache, dmaps)
        return float(np.sum(pooled * probe)), {"F": dF, "b": db}

    return loss_fn, params


def probe_bce(rng):
    """BCE gradient w.r.t. probabilities produced by a sigmoid dense layer."""
    b = int(rng.integers(1, 6))
    d = int(rng.integers(1, 5))
    x = rng.normal(size=(b, d))
    y = rng.integers(0, 2, size=b).astype(np.float64)
    params = {"W": nn.init_weights((d, 1), "glorot_uniform", rng),
              "b": rng.normal(size=1, scale=0.3)}

    def loss_fn(p):
        z, cache = nn.dense_forward(x, p["W"], p["b"], "sigmoid")
        probs = z[:, 0]
        losses, dp = nn.bce_loss(probs, y)
        dW, db, _ = nn.dense_backward(cache, (dp / b)[:, None])
        return float(np.mean(losses)), {"W": dW, "b": db}

    return loss_fn, params


PROBES = {
    "dense": probe_dense,
    "vanilla": probe_vanilla,
    "lstm": probe_lstm,
    "gru": probe_gru,
    "bidirectional": probe_bidirectional,
    "conv": probe_conv,
    "gap": probe_gap,
    "bce": probe_bce,
}
