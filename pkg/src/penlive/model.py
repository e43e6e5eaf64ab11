"""Model containers: a recurrent sequence classifier and the small CNN.

A model is an architecture descriptor plus a flat, named weight store (a
dict of ndarrays) and optional training metadata. Both classifiers output
a single sigmoid probability that the input is a human movement.

Serialization is a single JSON document:

    {"format_version": 1, "arch": ..., "hidden": ..., "bidirectional": ...,
     "feature_config": ..., "weights": {name: {"shape": [...], "data": [...]}},
     "train_config": ..., "seed": ...}
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from . import cells, nn
from .errors import ShapeMismatch

FORMAT_VERSION = 1


class Model:
    """Shared surface: named params, probability forward pass, JSON I/O."""

    arch: str
    params: dict
    seed: int
    feature_config: dict
    train_config: Optional[dict]

    def count_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def clone_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def loss_and_grads(self, batch, y, train: bool = True,
                       rng: Optional[np.random.Generator] = None):
        """Mean BCE over the batch and gradients for every parameter."""
        p, cache = self.forward_batch(batch, train=train, rng=rng)
        losses, dp = nn.bce_loss(p, y)
        return float(np.mean(losses)), self.backward_batch(cache, dp / p.size)

    def predict_batch(self, batch) -> np.ndarray:
        p, _ = self.forward_batch(batch, train=False, rng=None)
        return p

    # -- serialization ---------------------------------------------------

    def _header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "arch": self.arch,
            "hidden": getattr(self, "hidden", None),
            "bidirectional": getattr(self, "bidirectional", False),
            "feature_config": self.feature_config,
            "train_config": self.train_config,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        doc = self._header()
        doc["weights"] = {
            name: {"shape": list(p.shape), "data": p.reshape(-1).tolist()}
            for name, p in self.params.items()
        }
        return json.dumps(doc, separators=(",", ":"), sort_keys=True)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _weights_from_doc(doc: dict) -> dict:
    out = {}
    for name, spec in doc["weights"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        out[name] = arr
    return out


def load_model(path_or_json: str) -> Model:
    """Rebuild a model from its JSON document (path or literal text)."""
    text = path_or_json
    if not path_or_json.lstrip().startswith("{"):
        with open(path_or_json, "r", encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    if doc["arch"] == "custom_cnn":
        m = ImageClassifier(
            image_size=int(doc["feature_config"]["image_size"]),
            seed=doc["seed"],
            feature_config=doc["feature_config"],
            train_config=doc["train_config"],
            init=False,
        )
    else:
        m = SequenceClassifier(
            kind=doc["arch"],
            hidden=int(doc["hidden"]),
            bidirectional=bool(doc["bidirectional"]),
            seed=doc["seed"],
            feature_config=doc["feature_config"],
            train_config=doc["train_config"],
            init=False,
        )
    m.params = _weights_from_doc(doc)
    return m


class SequenceClassifier(Model):
    """Recurrent layer -> dropout -> one-unit sigmoid head.

    Bidirectional models run a second cell over the reversed sequence and
    concatenate both final states before the head.
    """

    def __init__(self, kind: str, hidden: int = 100, bidirectional: bool = False,
                 input_dim: int = 1, dropout_q: float = 0.25, seed: int = 0,
                 feature_config: Optional[dict] = None,
                 train_config: Optional[dict] = None,
                 dtype=np.float64, init: bool = True):
        if kind not in cells.GATES:
            raise ValueError(f"unknown cell kind {kind!r}")
        self.arch = kind
        self.kind = kind
        self.hidden = hidden
        self.bidirectional = bidirectional
        self.input_dim = input_dim
        self.dropout_q = dropout_q
        self.seed = seed
        self.feature_config = feature_config or {}
        self.train_config = train_config
        self.dtype = np.dtype(dtype)
        self.params = {}
        if init:
            rng = np.random.default_rng(seed)
            for prefix in ["cell"] + (["cell_bwd"] if bidirectional else []):
                cp = cells.init_cell_params(kind, input_dim, hidden, rng, self.dtype)
                for k, v in cp.items():
                    self.params[f"{prefix}.{k}"] = v
            head_in = hidden * (2 if bidirectional else 1)
            self.params["head.W"] = nn.init_weights((head_in, 1), "glorot_uniform", rng, self.dtype)
            self.params["head.b"] = nn.init_weights((1,), "zeros", rng, self.dtype)

    def _cell_params(self, prefix: str) -> dict:
        return {k: self.params[f"{prefix}.{k}"] for k in ("W", "U", "b")}

    def collate(self, seqs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pad 1-D sequences to a (B, L, input_dim) batch plus its mask."""
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        if np.any(lengths < 1):
            raise ValueError("cannot batch an empty sequence")
        b, length = len(seqs), int(lengths.max())
        x = np.zeros((b, length, self.input_dim), dtype=self.dtype)
        mask = np.zeros((b, length), dtype=self.dtype)
        for i, s in enumerate(seqs):
            arr = np.asarray(s, dtype=self.dtype).reshape(len(s), -1)
            if arr.shape[1] != self.input_dim:
                raise ShapeMismatch(f"sequence feature dim {arr.shape[1]}, expected {self.input_dim}")
            x[i, : lengths[i]] = arr
            mask[i, : lengths[i]] = 1.0
        return x, mask, lengths

    def forward_batch(self, batch, train: bool = False,
                      rng: Optional[np.random.Generator] = None):
        x, mask, lengths = batch
        h_fwd, caches_fwd = cells.run_sequence(self.kind, self._cell_params("cell"), x, mask)
        if self.bidirectional:
            x_rev = cells.reverse_padded(x, lengths)
            h_bwd, caches_bwd = cells.run_sequence(
                self.kind, self._cell_params("cell_bwd"), x_rev, mask)
            feat = np.concatenate([h_fwd, h_bwd], axis=1)
        else:
            caches_bwd = None
            feat = h_fwd
        dropped, drop_mask = nn.dropout_forward(
            feat, self.dropout_q, "train" if train else "eval", rng)
        z, head_cache = nn.dense_forward(dropped, self.params["head.W"],
                                         self.params["head.b"], "sigmoid")
        p = z[:, 0]
        return p, (caches_fwd, caches_bwd, drop_mask, head_cache, lengths)

    def backward_batch(self, cache, dp):
        caches_fwd, caches_bwd, drop_mask, head_cache, lengths = cache
        dW_head, db_head, dfeat = nn.dense_backward(head_cache, dp[:, None])
        dfeat = nn.dropout_backward(drop_mask, dfeat)
        grads = {"head.W": dW_head, "head.b": db_head}
        if self.bidirectional:
            d_fwd, d_bwd = dfeat[:, : self.hidden], dfeat[:, self.hidden :]
            g_bwd, _ = cells.run_sequence_backward(
                self.kind, self._cell_params("cell_bwd"), caches_bwd, d_bwd)
            for k, v in g_bwd.items():
                grads[f"cell_bwd.{k}"] = v
        else:
            d_fwd = dfeat
        g_fwd, _ = cells.run_sequence_backward(
            self.kind, self._cell_params("cell"), caches_fwd, d_fwd)
        for k, v in g_fwd.items():
            grads[f"cell.{k}"] = v
        return grads

    def predict(self, seq) -> float:
        """Probability for a single velocity sequence, eval mode."""
        batch = self.collate([np.asarray(seq, dtype=self.dtype)])
        return float(self.predict_batch(batch)[0])


class ImageClassifier(Model):
    """conv(64) -> relu -> conv(32) -> relu -> GAP -> dense(2048, relu)
    -> dropout(0.25) -> dense(1, sigmoid), on single-channel images."""

    FILTERS1 = 64
    FILTERS2 = 32
    FC_UNITS = 2048

    def __init__(self, image_size: int, seed: int = 0, dropout_q: float = 0.25,
                 feature_config: Optional[dict] = None,
                 train_config: Optional[dict] = None,
                 dtype=np.float64, init: bool = True):
        if image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {image_size}")
        self.arch = "custom_cnn"
        self.image_size = image_size
        self.dropout_q = dropout_q
        self.seed = seed
        self.feature_config = dict(feature_config or {})
        self.feature_config.setdefault("image_size", image_size)
        self.train_config = train_config
        self.dtype = np.dtype(dtype)
        self.params = {}
        if init:
            rng = np.random.default_rng(seed)
            self.params = {
                "conv1.F": nn.init_weights((self.FILTERS1, 1, 3, 3), "glorot_uniform", rng, self.dtype),
                "conv1.b": nn.init_weights((self.FILTERS1,), "zeros", rng, self.dtype),
                "conv2.F": nn.init_weights((self.FILTERS2, self.FILTERS1, 3, 3), "glorot_uniform", rng, self.dtype),
                "conv2.b": nn.init_weights((self.FILTERS2,), "zeros", rng, self.dtype),
                "fc.W": nn.init_weights((self.FILTERS2, self.FC_UNITS), "glorot_uniform", rng, self.dtype),
                "fc.b": nn.init_weights((self.FC_UNITS,), "zeros", rng, self.dtype),
                "head.W": nn.init_weights((self.FC_UNITS, 1), "glorot_uniform", rng, self.dtype),
                "head.b": nn.init_weights((1,), "zeros", rng, self.dtype),
            }

    def collate(self, images) -> np.ndarray:
        x = np.stack([np.asarray(im, dtype=self.dtype) for im in images])
        if x.ndim != 3 or x.shape[1] != x.shape[2]:
            raise ShapeMismatch(f"expected square (H, W) images, got batch {x.shape}")
        return x[:, None, :, :]

    def forward_batch(self, batch, train: bool = False,
                      rng: Optional[np.random.Generator] = None):
        if batch.shape[2] != self.image_size:
            raise ShapeMismatch(
                f"image size {batch.shape[2]} does not match model ({self.image_size})")
        a1, c1 = nn.conv2d_forward(batch, self.params["conv1.F"], self.params["conv1.b"],
                                   "relu", need_dx=False)
        a2, c2 = nn.conv2d_forward(a1, self.params["conv2.F"], self.params["conv2.b"], "relu")
        pooled, gap_cache = nn.gap_forward(a2)
        fc, fc_cache = nn.dense_forward(pooled, self.params["fc.W"], self.params["fc.b"], "relu")
        dropped, drop_mask = nn.dropout_forward(
            fc, self.dropout_q, "train" if train else "eval", rng)
        z, head_cache = nn.dense_forward(dropped, self.params["head.W"],
                                         self.params["head.b"], "sigmoid")
        return z[:, 0], (c1, c2, gap_cache, fc_cache, drop_mask, head_cache)

    def backward_batch(self, cache, dp):
        c1, c2, gap_cache, fc_cache, drop_mask, head_cache = cache
        dW_head, db_head, dfc = nn.dense_backward(head_cache, dp[:, None])
        dfc = nn.dropout_backward(drop_mask, dfc)
        dW_fc, db_fc, dpooled = nn.dense_backward(fc_cache, dfc)
        da2 = nn.gap_backward(gap_cache, dpooled)
        dF2, db2, da1 = nn.conv2d_backward(c2, da2)
        dF1, db1, _ = nn.conv2d_backward(c1, da1)
        return {
            "conv1.F": dF1, "conv1.b": db1,
            "conv2.F": dF2, "conv2.b": db2,
            "fc.W": dW_fc, "fc.b": db_fc,
            "head.W": dW_head, "head.b": db_head,
        }

    def predict(self, image) -> float:
        return float(self.predict_batch(self.collate([image]))[0])


def count_params(m: Model) -> int:
    """Number of trainable scalars in a model."""
    return m.count_params()
