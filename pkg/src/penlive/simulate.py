"""Deterministic simulator of human-captured unistroke gesture corpora.

Produces a corpus shaped like the public $1-GDS collection (16 unistroke
gesture classes, 10 writers, 10 repetitions, ~100 Hz stylus capture with
integer-pixel coordinates) for demos and self-contained evaluation when
the real corpus is not on disk.

Each (writer, class) pair gets a sigma-lognormal movement plan derived
from a gesture template with writer-specific geometry, tempo and
roundness. Every repetition jitters that plan, synthesizes a smooth
trajectory, then applies capture artifacts that make the sample "human":
motor tremor, sampling-clock jitter, and integer quantization of
coordinates and timestamps. Machine counterparts produced later by the
liveness pipeline lack these artifacts, which is precisely the contrast
the classifiers must learn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Point, StrokeLog, canonicalize
from .extract import moving_average
from .slm import (
    LognormalStroke,
    NoiseConfig,
    SigmaLognormalParams,
    derive_rng,
    perturb,
    synthesize,
)

# intra-writer repetition variability (plan-level), before capture artifacts
INSTANCE_NOISE = NoiseConfig(
    sd_D_rel=0.09, sd_t0=0.007, sd_mu=0.05, sd_sigma=0.025, sd_theta=0.05, rng_seed=0
)


def _circle(n: int = 16, r: float = 0.42, cx: float = 0.5, cy: float = 0.5,
            start: float = -0.5 * math.pi, sweep: float = 2.0 * math.pi) -> np.ndarray:
    a = start + sweep * np.arange(n + 1) / n
    return np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1)


def gesture_templates() -> dict[str, np.ndarray]:
    """Unit-square polylines (y grows downward) for 16 unistroke classes."""
    t = {
        "triangle": [(0.5, 0.08), (0.08, 0.88), (0.92, 0.88), (0.5, 0.08)],
        "x_mark": [(0.12, 0.1), (0.88, 0.9), (0.88, 0.1), (0.12, 0.9)],
        "rectangle": [(0.12, 0.15), (0.12, 0.85), (0.88, 0.85), (0.88, 0.15), (0.12, 0.15)],
        "check": [(0.12, 0.55), (0.38, 0.85), (0.9, 0.1)],
        "caret": [(0.1, 0.85), (0.5, 0.1), (0.9, 0.85)],
        "zigzag": [(0.05, 0.3), (0.35, 0.72), (0.65, 0.28), (0.95, 0.7)],
        "arrow": [(0.08, 0.82), (0.72, 0.3), (0.58, 0.26), (0.9, 0.1), (0.82, 0.45), (0.72, 0.3)],
        "left_bracket": [(0.64, 0.12), (0.3, 0.12), (0.3, 0.88), (0.64, 0.88)],
        "right_bracket": [(0.36, 0.12), (0.7, 0.12), (0.7, 0.88), (0.36, 0.88)],
        "vee": [(0.1, 0.18), (0.5, 0.9), (0.9, 0.18)],
        "delete_mark": [(0.15, 0.12), (0.85, 0.88), (0.15, 0.88), (0.85, 0.12)],
        "star": [(0.5, 0.05), (0.63, 0.38), (0.97, 0.4), (0.71, 0.62), (0.82, 0.95),
                 (0.5, 0.76), (0.18, 0.95), (0.29, 0.62), (0.03, 0.4), (0.37, 0.38), (0.5, 0.05)],
    }
    out = {name: np.asarray(pts, dtype=np.float64) for name, pts in t.items()}
    out["circle"] = _circle()
    # pigtail: loop with a tail
    a = np.linspace(0.25 * math.pi, 2.1 * math.pi, 15)
    out["pigtail"] = np.stack(
        [0.5 + 0.3 * np.cos(a) + 0.012 * a, 0.55 - 0.33 * np.sin(a)], axis=1)
    # curly braces as flattened s-curves
    ys = np.linspace(0.08, 0.92, 13)
    wiggle = 0.16 * np.sin(np.linspace(0.0, 2.0 * math.pi, 13))
    out["left_brace"] = np.stack([0.52 - 0.1 - wiggle, ys], axis=1)
    out["right_brace"] = np.stack([0.48 + 0.1 + wiggle, ys], axis=1)
    return out


GESTURE_CLASSES = tuple(sorted(gesture_templates()))


@dataclass(frozen=True)
class WriterProfile:
    size_px: float
    rotation: float
    shear: float
    scale_x: float
    scale_y: float
    sigma_base: float
    tempo: float
    roundness: float   # corner blending of stroke directions, 0..0.4
    sag_px: float      # lateral bow of long straight edges
    tremor_px: float
    jitter_ms: float
    hook_px: float     # touchdown/liftoff transient amplitude

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "WriterProfile":
        return cls(
            size_px=float(rng.uniform(260.0, 420.0)),
            rotation=float(rng.normal(0.0, 0.10)),
            shear=float(rng.normal(0.0, 0.08)),
            scale_x=float(rng.uniform(0.88, 1.12)),
            scale_y=float(rng.uniform(0.88, 1.12)),
            sigma_base=float(rng.uniform(0.16, 0.26)),
            tempo=float(rng.uniform(0.75, 1.15)),
            roundness=float(rng.uniform(0.08, 0.3)),
            sag_px=float(rng.uniform(1.0, 4.0)),
            tremor_px=float(rng.uniform(0.9, 1.6)),
            jitter_ms=float(rng.uniform(0.8, 1.6)),
            hook_px=float(rng.uniform(2.0, 5.0)),
        )


def _scaled_template(template: np.ndarray, w: WriterProfile, rng: np.random.Generator) -> np.ndarray:
    pts = template.copy()
    pts -= pts.mean(axis=0)
    pts[:, 0] *= w.scale_x
    pts[:, 1] *= w.scale_y
    pts[:, 0] += w.shear * pts[:, 1]
    c, s = math.cos(w.rotation), math.sin(w.rotation)
    pts = pts @ np.array([[c, s], [-s, c]])
    pts *= w.size_px
    # split long edges with a lateral sag so straight lines carry the
    # small mid-course corrections real writers produce
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        length = float(np.hypot(*seg))
        if length > 0.45 * w.size_px:
            normal = np.array([-seg[1], seg[0]]) / max(length, 1e-9)
            sag = w.sag_px * rng.uniform(0.5, 1.5) * rng.choice((-1.0, 1.0))
            out.append(a + 0.5 * seg + sag * normal)
        out.append(b)
    return np.asarray(out)


def _build_plan(pts: np.ndarray, w: WriterProfile, rng: np.random.Generator) -> SigmaLognormalParams:
    deltas = np.diff(pts, axis=0)
    lengths = np.hypot(deltas[:, 0], deltas[:, 1])
    keep = lengths > 1e-6
    deltas, lengths = deltas[keep], lengths[keep]
    raw = np.arctan2(deltas[:, 1], deltas[:, 0])
    theta = raw.copy()
    for i in range(1, len(theta)):
        theta[i] -= 2.0 * math.pi * round((theta[i] - theta[i - 1]) / (2.0 * math.pi))

    strokes = []
    t0 = 0.06
    b = w.roundness
    for i, (d_amp, th) in enumerate(zip(lengths, theta)):
        th_s = th + b * (theta[i - 1] - th) if i > 0 else th
        th_e = th + b * (theta[i + 1] - th) if i + 1 < len(theta) else th
        sigma = float(np.clip(w.sigma_base * math.exp(rng.normal(0.0, 0.12)), 0.13, 0.38))
        mu = math.log(w.tempo * (0.042 + 0.175 * math.sqrt(d_amp / w.size_px)))
        strokes.append(LognormalStroke(D=float(d_amp), t0=t0, mu=mu, sigma=sigma,
                                       theta_s=th_s, theta_e=th_e))
        if i + 1 < len(theta):
            corner = min(abs(theta[i + 1] - th) / math.pi, 1.0)
            overlap = 0.55 + 0.75 * corner + rng.normal(0.0, 0.04)
            t0 += max(overlap, 0.35) * math.exp(mu)
    return SigmaLognormalParams(strokes=tuple(strokes), origin=(float(pts[0, 0]), float(pts[0, 1])))


def _instance_plan(base: SigmaLognormalParams, rng: np.random.Generator) -> SigmaLognormalParams:
    plan = perturb(base, INSTANCE_NOISE, rng)
    rot = rng.normal(0.0, 0.05)
    scale = 1.0 + rng.normal(0.0, 0.05)
    strokes = tuple(
        LognormalStroke(D=max(s.D * scale, 1e-3), t0=s.t0, mu=s.mu, sigma=s.sigma,
                        theta_s=s.theta_s + rot, theta_e=s.theta_e + rot)
        for s in plan.strokes
    )
    return SigmaLognormalParams(strokes=strokes, origin=base.origin, pen_gaps=plan.pen_gaps)


def _hook(xy: np.ndarray, rng: np.random.Generator, amplitude: float, at_end: bool) -> None:
    """Touchdown/liftoff transient: a small flick decaying over ~30 ms.

    Landing and lift wobble is a stylus-capture staple that the smooth
    kinematic reconstruction cannot reproduce, so it separates human
    samples from their machine counterparts at both feature levels.
    """
    n = xy.shape[0]
    if n < 3:
        return
    vec = amplitude * rng.uniform(0.5, 1.5)
    ang = rng.uniform(0.0, 2.0 * np.pi)
    flick = vec * np.array([np.cos(ang), np.sin(ang)])
    weights = (0.15, 0.45, 1.0) if at_end else (1.0, 0.45, 0.15)
    rows = slice(n - 3, n) if at_end else slice(0, 3)
    xy[rows] += np.outer(weights, flick)


def _humanize(traj: StrokeLog, w: WriterProfile, rng: np.random.Generator,
              sample_id: str, symbol_class: str, writer: str, device: str) -> StrokeLog:
    """Add capture artifacts: hooks, tremor, clock jitter, quantization."""
    offset = rng.integers(20, 600, size=2)
    new_strokes = []
    t_shift = None
    for arr in traj.stroke_arrays():
        n = arr.shape[0]
        tremor = np.stack(
            [moving_average(rng.normal(0.0, w.tremor_px, n), 3) for _ in range(2)], axis=1)
        xy = arr[:, :2] + tremor + offset
        _hook(xy, rng, w.hook_px, at_end=False)
        _hook(xy, rng, w.hook_px, at_end=True)
        xy = np.rint(xy)
        t = arr[:, 2] + rng.normal(0.0, w.jitter_ms, n)
        t = np.maximum.accumulate(t)
        if t_shift is None:
            t_shift = t[0]
        t = np.rint(t - t_shift)
        new_strokes.append(tuple(
            Point(float(x), float(y), float(max(ti, 0.0))) for (x, y), ti in zip(xy, t)))
    raw = StrokeLog(id=sample_id, label="human", symbol_class=symbol_class,
                    writer=writer, device=device, strokes=tuple(new_strokes))
    return canonicalize(raw)


def make_corpus(
    n_classes: int = 16,
    n_writers: int = 10,
    reps: int = 10,
    seed: int = 2024,
    rate_hz: float = 100.0,
    device: str = "stylus",
    name: str = "gds1-sim",
) -> Dataset:
    """Simulated human corpus: n_classes x n_writers x reps stroke logs."""
    if not 1 <= n_classes <= len(GESTURE_CLASSES):
        raise ValueError(f"n_classes must be in [1, {len(GESTURE_CLASSES)}]")
    templates = gesture_templates()
    samples = []
    for wi in range(n_writers):
        writer = f"w{wi:02d}"
        w_rng = derive_rng(seed, f"writer/{writer}", 0)
        profile = WriterProfile.draw(w_rng)
        for cls in GESTURE_CLASSES[:n_classes]:
            plan_rng = derive_rng(seed, f"plan/{writer}/{cls}", 0)
            pts = _scaled_template(templates[cls], profile, plan_rng)
            base_plan = _build_plan(pts, profile, plan_rng)
            for rep in range(reps):
                inst_rng = derive_rng(seed, f"sample/{writer}/{cls}", rep)
                plan = _instance_plan(base_plan, inst_rng)
                sample_id = f"{cls}-{writer}-r{rep:02d}"
                smooth = synthesize(plan, rate_hz, sample_id=sample_id)
                samples.append(
                    _humanize(smooth, profile, inst_rng, sample_id, cls, writer, device))
    return Dataset(samples=tuple(samples), name=name)


def make_fixture(n: int = 50, seed: int = 2024) -> Dataset:
    """Small deterministic corpus slice for CLI demos and quick tests."""
    per_class = max(1, math.ceil(n / len(GESTURE_CLASSES)))
    d = make_corpus(n_classes=16, n_writers=max(1, per_class), reps=1,
                    seed=seed, name="fixture")
    return Dataset(samples=d.samples[:n], name="fixture")
