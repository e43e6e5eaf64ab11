"""Dynamic-time-warping distance and the 1NN baseline classifier.

The inner loop lives in a compiled extension (`penlive._dtw_cy`) when it
has been built, with a numpy anti-diagonal kernel as fallback; both
produce identical distances. `penlive.dtw.BACKEND` reports which one is
active. See benchmarks/bench_dtw.py for a speed comparison.

Distances are unnormalized sums of |a_i - b_j| over the optimal monotone
alignment. 1NN scoring for ROC analysis uses
score = d(nearest synthetic) - d(nearest human), so larger means more
human-like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyReferenceSet, EmptySequence
from .features import VelocitySequence

try:
    from . import _dtw_cy as _kernel

    BACKEND = "cython"
except ImportError:  # extension not built; numpy fallback
    from . import _dtw_py as _kernel

    BACKEND = "numpy"

from . import _dtw_py


@dataclass(frozen=True)
class DtwConfig:
    """band_radius: Sakoe-Chiba half-width in steps (None disables).
    early_abandon: allow pruning against a caller-supplied best-so-far."""

    band_radius: Optional[int] = None
    early_abandon: bool = False

    def __post_init__(self):
        if self.band_radius is not None and self.band_radius < 0:
            raise ValueError(f"band_radius must be >= 0, got {self.band_radius}")


def _values(seq) -> np.ndarray:
    arr = seq.values if isinstance(seq, VelocitySequence) else np.asarray(seq, dtype=np.float64)
    if arr.size == 0:
        raise EmptySequence("cannot align an empty sequence")
    return np.ascontiguousarray(arr, dtype=np.float64)


def dtw_distance(a, b, cfg: DtwConfig = DtwConfig(), *, upper_bound: float = math.inf) -> float:
    """Minimum cumulative |a_i - b_j| over monotone alignment paths.

    With a band, cells outside |i - j| <= band_radius are unreachable (the
    distance can become inf). `upper_bound` is honored only when
    cfg.early_abandon is set: results below the bound are exact, anything
    else may be returned as inf.
    """
    va, vb = _values(a), _values(b)
    band = cfg.band_radius if cfg.band_radius is not None else -1
    ub = upper_bound if cfg.early_abandon else math.inf
    return float(_kernel.dtw(va, vb, band, ub))


def dtw_distance_reference(a, b, cfg: DtwConfig = DtwConfig()) -> float:
    """Same distance via the numpy kernel, regardless of active backend."""
    va, vb = _values(a), _values(b)
    band = cfg.band_radius if cfg.band_radius is not None else -1
    return float(_dtw_py.dtw(va, vb, band, math.inf))


def classify_1nn(
    query,
    refs: Sequence[VelocitySequence],
    cfg: DtwConfig = DtwConfig(),
) -> tuple[str, float]:
    """Label of the DTW-nearest reference; ties go to the lowest index."""
    if not refs:
        raise EmptyReferenceSet("no reference sequences")
    vq = _values(query)
    best_cost = math.inf
    best_label = refs[0].label
    for ref in refs:
        d = float(_kernel.dtw(vq, _values(ref),
                              cfg.band_radius if cfg.band_radius is not None else -1,
                              best_cost if cfg.early_abandon else math.inf))
        if d < best_cost:
            best_cost = d
            best_label = ref.label
    return best_label, best_cost


def nn_liveness_score(
    query,
    refs: Sequence[VelocitySequence],
    cfg: DtwConfig = DtwConfig(),
) -> tuple[str, float, float]:
    """(predicted label, best cost, score) for one query.

    The score is d(nearest synthetic ref) - d(nearest human ref); early
    abandoning prunes against the larger of the two running minima so both
    stay exact.
    """
    if not refs:
        raise EmptyReferenceSet("no reference sequences")
    vq = _values(query)
    band = cfg.band_radius if cfg.band_radius is not None else -1
    best = {"human": math.inf, "synthetic": math.inf}
    best_cost = math.inf
    best_label = refs[0].label
    for ref in refs:
        ub = max(best.values()) if cfg.early_abandon else math.inf
        d = float(_kernel.dtw(vq, _values(ref), band, ub))
        if d < best[ref.label]:
            best[ref.label] = d
        if d < best_cost:
            best_cost = d
            best_label = ref.label
    return best_label, best_cost, best["synthetic"] - best["human"]
