"""Sequence classifiers over velocity inputs: vanilla/LSTM/GRU and their
bidirectional variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GATES, cell_param_count
from .features import VelocitySequence
from .model import Model, SequenceClassifier, count_params


@dataclass(frozen=True)
class RnnSpec:
    kind: str = "gru"
    hidden: int = 100
    bidirectional: bool = False
    input_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GATES:
            raise ValueError(f"kind must be one of {sorted(GATES)}, got {self.kind!r}")
        if self.hidden < 1 or self.input_dim < 1:
            raise ValueError("hidden and input_dim must be >= 1")


def build_rnn(spec: RnnSpec, feature_config: dict | None = None,
              dtype=np.float64) -> SequenceClassifier:
    """Recurrent layer, dropout 0.25 on its output, one-unit sigmoid head."""
    return SequenceClassifier(
        kind=spec.kind,
        hidden=spec.hidden,
        bidirectional=spec.bidirectional,
        input_dim=spec.input_dim,
        dropout_q=0.25,
        seed=spec.seed,
        feature_config=feature_config or {},
        dtype=dtype,
    )


def rnn_forward(m: SequenceClassifier, v) -> float:
    """Probability that the sequence is human; eval mode, deterministic."""
    values = v.values if isinstance(v, VelocitySequence) else np.asarray(v)
    return m.predict(values)


def expected_param_count(spec: RnnSpec) -> int:
    """Closed-form trainable-weight count for an RnnSpec."""
    per_dir = cell_param_count(spec.kind, spec.input_dim, spec.hidden)
    dirs = 2 if spec.bidirectional else 1
    head = spec.hidden * dirs + 1
    return per_dir * dirs + head


__all__ = ["RnnSpec", "build_rnn", "rnn_forward", "count_params",
           "expected_param_count", "Model"]
