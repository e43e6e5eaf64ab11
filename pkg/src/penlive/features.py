"""Velocity-sequence features: the single input of every temporal classifier.

The pen-tip speed between consecutive points is the Euclidean distance in
px divided by the time offset in ms. The sequence is computed over the
globally concatenated points of a sample, so a pen-up interval contributes
one low-speed value with the real in-air time offset.

All classifiers consume the same pipeline, in this order:
velocity_profile -> smooth(3) -> [downsample_half] -> cap_length(400).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .data import StrokeLog
from .errors import EvenWindow, MalformedRecord, TooShort, ZeroTimeOffset

SEQUENCE_CAP = 400
SMOOTH_WINDOW = 3


@dataclass(frozen=True)
class VelocitySequence:
    """Scalar pen-tip speeds (px/ms) with provenance."""

    values: np.ndarray
    source_id: str = ""
    label: str = "human"

    def __post_init__(self):
        if self.label not in ("human", "synthetic"):
            raise ValueError(f"label must be human or synthetic, got {self.label!r}")
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"expected a non-empty 1-D sequence, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("speeds must be finite and non-negative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


def velocity_profile(s: StrokeLog) -> VelocitySequence:
    """Point-wise speeds of the concatenated sample; length = points - 1.

    Requires a canonical sample with at least 2 points. The sequence is
    invariant under rigid rotation and translation of the trajectory.
    """
    pts = s.points()
    if pts.shape[0] < 2:
        raise TooShort(f"sample {s.id!r} has {pts.shape[0]} point(s), need >= 2")
    d = np.diff(pts, axis=0)
    dt = d[:, 2]
    if np.any(dt <= 0):
        # cannot occur after canonicalize; defensive for raw inputs
        raise ZeroTimeOffset(f"sample {s.id!r} has non-positive time offsets")
    v = np.hypot(d[:, 0], d[:, 1]) / dt
    return VelocitySequence(values=v, source_id=s.id, label=s.label)


def smooth(v: VelocitySequence, window: int = SMOOTH_WINDOW) -> VelocitySequence:
    """Centered moving average; the window is clipped at the boundaries.

    window=1 is the identity. Length is preserved.
    """
    if window < 1 or window % 2 == 0:
        raise EvenWindow(f"window must be odd and >= 1, got {window}")
    if window == 1:
        return v
    half = window // 2
    x = v.values
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x)))
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half, n - 1)
    out = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)
    return replace(v, values=out)


def downsample_half(v: VelocitySequence) -> VelocitySequence:
    """Keep every other value starting at index 0; length becomes ceil(n/2)."""
    return replace(v, values=v.values[::2])


def cap_length(v: VelocitySequence, cap: int = SEQUENCE_CAP) -> VelocitySequence:
    """Truncate to the first `cap` values."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if len(v) <= cap:
        return v
    return replace(v, values=v.values[:cap])


@dataclass(frozen=True)
class FeatureConfig:
    """Flags selecting the feature pipeline variant for one experiment."""

    smooth_window: int = SMOOTH_WINDOW  # 1 disables smoothing
    downsample: bool = False
    cap: int = SEQUENCE_CAP

    def as_dict(self) -> dict:
        return {
            "smooth_window": self.smooth_window,
            "downsample": self.downsample,
            "cap": self.cap,
        }


def featurize(s: StrokeLog, cfg: FeatureConfig = FeatureConfig()) -> VelocitySequence:
    """The canonical pipeline: profile -> smooth -> [halve] -> cap."""
    v = velocity_profile(s)
    v = smooth(v, cfg.smooth_window)
    if cfg.downsample:
        v = downsample_half(v)
    return cap_length(v, cfg.cap)


def write_features_jsonl(seqs, sink, meta: dict | None = None) -> None:
    """One `{"id":..., "label":..., "v":[...]}` record per sequence."""
    if meta is not None:
        sink.write(json.dumps({"_meta": meta}, separators=(",", ":"), sort_keys=True) + "\n")
    for v in seqs:
        rec = {"id": v.source_id, "label": v.label, "v": [float(x) for x in v.values]}
        sink.write(json.dumps(rec, separators=(",", ":")) + "\n")


def parse_features_jsonl(lines) -> list[VelocitySequence]:
    """Inverse of write_features_jsonl; skips a leading _meta record."""
    out = []
    first = True
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        if first and isinstance(obj, dict) and set(obj) == {"_meta"}:
            first = False
            continue
        first = False
        if not isinstance(obj, dict) or set(obj) != {"id", "label", "v"}:
            raise MalformedRecord(line_no, "expected keys id, label, v")
        try:
            out.append(VelocitySequence(values=np.asarray(obj["v"], dtype=np.float64),
                                        source_id=str(obj["id"]), label=obj["label"]))
        except ValueError as exc:
            raise MalformedRecord(line_no, str(exc)) from None
    return out


def mean_abs_second_difference(v: VelocitySequence) -> float:
    """Jitter statistic: mean |v[i+1] - 2 v[i] + v[i-1]|; 0 for length < 3.

    Smoother profiles score lower.
    """
    x = v.values
    if x.size < 3:
        return 0.0
    return float(np.mean(np.abs(np.diff(x, n=2))))
