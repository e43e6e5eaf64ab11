"""Canonical in-memory model for handwriting samples plus JSON-Lines I/O.

A sample (`StrokeLog`) is an ordered list of pen-down strokes, each an
ordered list of `(x px, y px, t ms)` points. Pen-up intervals are implied
by the stroke boundaries; there are no sentinel points. Values are
immutable after construction and safe to share across threads.

Dataset file format: one JSON object per line, UTF-8, LF line endings:

    {"id": "...", "label": "human"|"synthetic", "class": "...",
     "writer": "...", "device": "stylus"|"finger"|"mouse"|"unknown",
     "strokes": [[[x, y, t], ...], ...]}

Numbers are serialized in shortest round-trip decimal form. A leading
record whose only key is ``"_meta"`` is treated as a provenance header and
skipped by the parser; `write_dataset` itself never emits one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np

from .errors import DuplicateId, MalformedRecord, NonMonotonicTime

LABELS = ("human", "synthetic")
DEVICES = ("stylus", "finger", "mouse", "unknown")


@dataclass(frozen=True)
class Point:
    """One timestamped pen position: x, y in pixels, t in milliseconds."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError(f"timestamp must be finite and non-negative, got {self.t}")


@dataclass(frozen=True)
class StrokeLog:
    """A labeled multistroke handwriting sample.

    Timestamps may repeat within a stroke until `canonicalize` is applied;
    across stroke boundaries the first timestamp of stroke k+1 must be >=
    the last timestamp of stroke k.
    """

    id: str
    label: str
    symbol_class: str
    writer: str
    device: str
    strokes: tuple[tuple[Point, ...], ...]

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.device not in DEVICES:
            raise ValueError(f"device must be one of {DEVICES}, got {self.device!r}")
        if not self.strokes:
            raise ValueError("sample has no strokes")
        for stroke in self.strokes:
            if not stroke:
                raise ValueError("empty stroke")
        for prev, nxt in zip(self.strokes, self.strokes[1:]):
            if nxt[0].t < prev[-1].t:
                raise ValueError(
                    f"stroke starts at t={nxt[0].t} before previous stroke ended at t={prev[-1].t}"
                )

    @property
    def num_points(self) -> int:
        return sum(len(s) for s in self.strokes)

    def points(self) -> np.ndarray:
        """All points concatenated across strokes as an (n, 3) array of x, y, t."""
        return np.array([(p.x, p.y, p.t) for s in self.strokes for p in s], dtype=np.float64)

    def stroke_arrays(self) -> list[np.ndarray]:
        """Per-stroke (n, 3) arrays of x, y, t."""
        return [np.array([(p.x, p.y, p.t) for p in s], dtype=np.float64) for s in self.strokes]


@dataclass(frozen=True)
class Dataset:
    samples: tuple[StrokeLog, ...]
    name: str = ""

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(s.id)
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def by_label(self, label: str) -> tuple[StrokeLog, ...]:
        return tuple(s for s in self.samples if s.label == label)


def canonicalize(s: StrokeLog) -> StrokeLog:
    """Drop all but the first point of each equal-timestamp run, per stroke.

    Strokes left with fewer than 2 points are kept (they can still be
    rasterized). Raises NonMonotonicTime if, after the removal, any
    timestamp decreases within a stroke. Idempotent; never reorders points.
    """
    out = []
    for stroke in s.strokes:
        kept = [stroke[0]]
        for p in stroke[1:]:
            if p.t == kept[-1].t:
                continue
            if p.t < kept[-1].t:
                raise NonMonotonicTime(
                    f"sample {s.id!r}: t drops from {kept[-1].t} to {p.t}"
                )
            kept.append(p)
        out.append(tuple(kept))
    return StrokeLog(
        id=s.id,
        label=s.label,
        symbol_class=s.symbol_class,
        writer=s.writer,
        device=s.device,
        strokes=tuple(out),
    )


_RECORD_KEYS = {"id", "label", "class", "writer", "device", "strokes"}


def _record_to_sample(obj: dict, line_no: int) -> StrokeLog:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise MalformedRecord(line_no, f"unknown keys {sorted(unknown)}")
    missing = _RECORD_KEYS - set(obj)
    if missing:
        raise MalformedRecord(line_no, f"missing keys {sorted(missing)}")
    strokes = obj["strokes"]
    if not isinstance(strokes, list):
        raise MalformedRecord(line_no, "strokes must be a list")
    try:
        built = tuple(
            tuple(Point(float(x), float(y), float(t)) for x, y, t in stroke)
            for stroke in strokes
        )
        return StrokeLog(
            id=str(obj["id"]),
            label=obj["label"],
            symbol_class=str(obj["class"]),
            writer=str(obj["writer"]),
            device=obj["device"],
            strokes=built,
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, str(exc)) from None


def parse_dataset(lines: Iterable[str], name: str = "") -> Dataset:
    """Parse a JSON-Lines stream into a Dataset.

    Empty lines are ignored. A first record holding only a "_meta" key is
    skipped (provenance header written by the CLI). Malformed lines abort
    with their 1-based line number.
    """
    samples = []
    ids = set()
    first_record = True
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        if first_record and isinstance(obj, dict) and set(obj) == {"_meta"}:
            first_record = False
            continue
        first_record = False
        sample = _record_to_sample(obj, line_no)
        if sample.id in ids:
            raise DuplicateId(sample.id)
        ids.add(sample.id)
        samples.append(sample)
    return Dataset(samples=tuple(samples), name=name)


def _sample_to_record(s: StrokeLog) -> dict:
    return {
        "id": s.id,
        "label": s.label,
        "class": s.symbol_class,
        "writer": s.writer,
        "device": s.device,
        "strokes": [[[p.x, p.y, p.t] for p in stroke] for stroke in s.strokes],
    }


def write_dataset(d: Dataset, sink: Optional[TextIO] = None) -> str:
    """Serialize a Dataset to JSON-Lines, one sample per line.

    Writes to `sink` when given; always returns the serialized text.
    parse_dataset(write_dataset(d)) reproduces d field-for-field, with full
    floating precision (json round-trips Python floats exactly).
    """
    out = "".join(
        json.dumps(_sample_to_record(s), separators=(",", ":")) + "\n" for s in d.samples
    )
    if sink is not None:
        sink.write(out)
    return out


def load_dataset(path: str, name: Optional[str] = None) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dataset(fh, name=name if name is not None else path)


def save_dataset(d: Dataset, path: str, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, separators=(",", ":"), sort_keys=True) + "\n")
        write_dataset(d, fh)
