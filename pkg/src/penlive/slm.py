"""Sigma-lognormal movement model: evaluation, synthesis, and perturbation.

A movement plan is a superposition of lognormal strokes. Each stroke j
contributes a speed profile

    v_j(t) = D / (sigma * sqrt(2*pi) * (t - t0)) * exp(-(ln(t - t0) - mu)^2 / (2 sigma^2))

for t > t0 (zero otherwise), which integrates to the path amplitude D, and
a direction profile

    phi_j(t) = theta_s + (theta_e - theta_s)/2 * (1 + erf((ln(t - t0) - mu) / (sigma*sqrt(2))))

sweeping from the start angle to the end angle along the stroke. The
planar velocity of the pen is the vector sum over strokes; positions come
from trapezoidal integration.

All kinematic math runs in seconds; the StrokeLog boundary converts to
milliseconds.

Pen gaps: a plan may carry a schedule of (after_stroke_index, gap_ms)
entries for multistroke symbols. Entry (k, g) pauses point emission for g
milliseconds of plan time starting at the onset of stroke k+1, while the
position keeps integrating, so whatever stroke k+1 traces during the pause
happens in the air. The stroke extractor exploits this by inserting an
explicit in-air "bridge" stroke right after each gap index.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import erf

from .data import Point, StrokeLog
from .errors import ClampExhausted, DomainError, EmptyModel, LengthMismatch

SQRT_2PI = math.sqrt(2.0 * math.pi)

# support cutoff in log-time standard deviations; exp(mu + 3.5 sigma)
# covers all but ~2.3e-4 of the stroke's area, well inside the toolkit's
# displacement tolerances, and keeps sampling grids short
SUPPORT_SIGMAS = 3.5

SNR_SENTINEL_DB = 300.0


@dataclass(frozen=True)
class LognormalStroke:
    """One elementary movement unit.

    D: path amplitude in px (> 0); t0: onset time in seconds; mu/sigma:
    log-time delay and log-response time (sigma > 0); theta_s/theta_e:
    start and end direction in radians.
    """

    D: float
    t0: float
    mu: float
    sigma: float
    theta_s: float
    theta_e: float

    def __post_init__(self):
        vals = (self.D, self.t0, self.mu, self.sigma, self.theta_s, self.theta_e)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite stroke parameter in {vals}")
        if self.D <= 0:
            raise ValueError(f"D must be positive, got {self.D}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def peak_time(self) -> float:
        """Time of maximum speed: t0 + exp(mu - sigma^2)."""
        return self.t0 + math.exp(self.mu - self.sigma**2)

    @property
    def support_end(self) -> float:
        return self.t0 + math.exp(self.mu + SUPPORT_SIGMAS * self.sigma)


class PenGap(NamedTuple):
    after_stroke: int
    duration_ms: float


@dataclass(frozen=True)
class SigmaLognormalParams:
    """An ordered stroke plan plus start point and pen-gap schedule."""

    strokes: tuple[LognormalStroke, ...]
    origin: tuple[float, float] = (0.0, 0.0)
    pen_gaps: tuple[PenGap, ...] = ()

    def __post_init__(self):
        for a, b in zip(self.strokes, self.strokes[1:]):
            if b.t0 < a.t0:
                raise ValueError(f"stroke onsets must be non-decreasing: {a.t0} then {b.t0}")
        seen = set()
        for gap in self.pen_gaps:
            if not 0 <= gap.after_stroke < len(self.strokes) - 1:
                raise ValueError(f"pen gap index {gap.after_stroke} out of range")
            if gap.after_stroke in seen:
                raise ValueError(f"duplicate pen gap index {gap.after_stroke}")
            if not math.isfinite(gap.duration_ms) or gap.duration_ms <= 0:
                raise ValueError(f"pen gap duration must be positive, got {gap.duration_ms}")
            seen.add(gap.after_stroke)


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-mean Gaussian perturbation magnitudes for each stroke parameter.

    Scale parameters use relative deviations (D), the rest absolute; time
    in seconds, angles in radians.
    """

    sd_D_rel: float = 0.08
    sd_t0: float = 0.004
    sd_mu: float = 0.04
    sd_sigma: float = 0.02
    sd_theta: float = 0.035
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("sd_D_rel", "sd_t0", "sd_mu", "sd_sigma", "sd_theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def stroke_speed(s: LognormalStroke, t) -> np.ndarray | float:
    """Speed contribution of one stroke at time(s) t, in px/s.

    Total function: returns 0 for t <= t0. Integrates to D over (t0, inf).
    """
    t_arr = np.asarray(t, dtype=np.float64)
    dt = t_arr - s.t0
    out = np.zeros_like(dt)
    pos = dt > 0
    if np.any(pos):
        dtp = dt[pos]
        z = (np.log(dtp) - s.mu) / s.sigma
        out[pos] = s.D / (s.sigma * SQRT_2PI * dtp) * np.exp(-0.5 * z * z)
    return out if out.ndim else float(out)


def stroke_direction(s: LognormalStroke, t) -> np.ndarray | float:
    """Pen direction of one stroke at time(s) t > t0, in radians.

    Monotone between theta_s and theta_e; equals their midpoint at
    t = t0 + exp(mu). Raises DomainError at or before the onset.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= s.t0):
        raise DomainError(f"direction undefined at t <= t0 ({s.t0})")
    z = (np.log(t_arr - s.t0) - s.mu) / (s.sigma * math.sqrt(2.0))
    out = s.theta_s + (s.theta_e - s.theta_s) * 0.5 * (1.0 + erf(z))
    return out if out.ndim else float(out)


def plan_velocity(strokes: Sequence[LognormalStroke], t: np.ndarray) -> np.ndarray:
    """Vector sum of all stroke velocities at times t; shape (len(t), 2).

    Assumes t is sorted ascending (sampling grids and midpoint time axes
    are); each stroke is evaluated only on its own support window.
    """
    v = np.zeros((t.size, 2))
    for s in strokes:
        i0 = int(np.searchsorted(t, s.t0, side="right"))
        i1 = int(np.searchsorted(t, s.support_end, side="right"))
        if i0 >= i1:
            continue
        dtp = t[i0:i1] - s.t0
        ln = np.log(dtp)
        z = (ln - s.mu) / s.sigma
        speed = s.D / (s.sigma * SQRT_2PI * dtp) * np.exp(-0.5 * z * z)
        phi = s.theta_s + (s.theta_e - s.theta_s) * 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
        v[i0:i1, 0] += speed * np.cos(phi)
        v[i0:i1, 1] += speed * np.sin(phi)
    return v


def plan_speed(strokes: Sequence[LognormalStroke], t: np.ndarray) -> np.ndarray:
    """Magnitude of the planar velocity at times t (px/s)."""
    return np.hypot(*plan_velocity(strokes, t).T)


def synthesize(
    p: SigmaLognormalParams,
    rate_hz: float = 100.0,
    *,
    sample_id: str = "synthetic",
    symbol_class: str = "",
    writer: str = "",
    device: str = "unknown",
) -> StrokeLog:
    """Sample a plan into a synthetic StrokeLog at a uniform rate.

    The trajectory is integrated with the trapezoidal rule from the origin.
    Each pen gap suppresses emission for its duration starting at the next
    stroke's onset; the emitted inter-stroke time offset equals the gap
    duration to within half a sample period.
    """
    if not p.strokes:
        raise EmptyModel("plan has no strokes")
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    step = 1.0 / rate_hz
    t_start = min(s.t0 for s in p.strokes)
    t_end = max(s.support_end for s in p.strokes)
    n = int(math.ceil((t_end - t_start) / step)) + 1
    t = t_start + step * np.arange(n)

    vel = plan_velocity(p.strokes, t)
    pos = np.empty_like(vel)
    pos[0] = p.origin
    np.cumsum(0.5 * step * (vel[1:] + vel[:-1]), axis=0, out=pos[1:])
    pos[1:] += p.origin

    # emission mask: drop round(g / step) - 1 grid points per gap so the
    # emitted hole spans the gap duration to within half a sample period,
    # and record the boundary for stroke splitting either way
    emit = np.ones(n, dtype=bool)
    boundaries = []
    for gap in sorted(p.pen_gaps):
        cut_t = p.strokes[gap.after_stroke + 1].t0
        i_cut = int(np.searchsorted(t, cut_t))
        if i_cut >= n:
            continue
        n_skip = max(int(round(gap.duration_ms / 1000.0 / step)) - 1, 0)
        emit[i_cut : min(i_cut + n_skip, n)] = False
        boundaries.append(i_cut + n_skip)

    t_ms = (t - t_start) * 1000.0
    strokes_out: list[list[Point]] = [[]]
    boundary_set = set(boundaries)
    for i in range(n):
        if i in boundary_set and strokes_out[-1]:
            strokes_out.append([])
        if emit[i]:
            strokes_out[-1].append(Point(float(pos[i, 0]), float(pos[i, 1]), float(t_ms[i])))
    strokes_out = [s for s in strokes_out if s]

    return StrokeLog(
        id=sample_id,
        label="synthetic",
        symbol_class=symbol_class,
        writer=writer,
        device=device,
        strokes=tuple(tuple(s) for s in strokes_out),
    )


def derive_rng(seed: int, sample_id: str, replica: int) -> np.random.Generator:
    """RNG stream keyed on (seed, sample id, replica index) only.

    Keeps counterpart generation deterministic regardless of worker count
    or scheduling order.
    """
    digest = hashlib.sha256(f"{seed}|{sample_id}|{replica}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _resample_positive(base: float, sd: float, rng, relative: bool) -> float:
    if sd == 0:
        return base
    for _ in range(100):
        cand = base * (1.0 + rng.normal(0.0, sd)) if relative else base + rng.normal(0.0, sd)
        if cand > 0:
            return cand
    raise ClampExhausted(f"no positive draw around {base} with sd {sd} in 100 attempts")


def perturb(
    p: SigmaLognormalParams,
    n: NoiseConfig,
    rng: Optional[np.random.Generator] = None,
) -> SigmaLognormalParams:
    """Apply independent zero-mean Gaussian noise to every stroke parameter.

    D and sigma are kept positive by resampling (at most 100 attempts each,
    then ClampExhausted). Stroke count and gap structure are preserved; gap
    durations are jittered with the t0 deviation. Zero noise is the
    identity; a fixed seed makes this a pure function of (p, n).
    """
    if rng is None:
        rng = np.random.default_rng(n.rng_seed)
    new_strokes = []
    prev_t0 = -math.inf
    for s in p.strokes:
        d_new = _resample_positive(s.D, n.sd_D_rel, rng, relative=True)
        t0_new = s.t0 + (rng.normal(0.0, n.sd_t0) if n.sd_t0 > 0 else 0.0)
        mu_new = s.mu + (rng.normal(0.0, n.sd_mu) if n.sd_mu > 0 else 0.0)
        sigma_new = _resample_positive(s.sigma, n.sd_sigma, rng, relative=False)
        th_s = s.theta_s + (rng.normal(0.0, n.sd_theta) if n.sd_theta > 0 else 0.0)
        th_e = s.theta_e + (rng.normal(0.0, n.sd_theta) if n.sd_theta > 0 else 0.0)
        t0_new = max(t0_new, prev_t0)  # keep onset order, a structural invariant
        prev_t0 = t0_new
        new_strokes.append(
            LognormalStroke(D=d_new, t0=t0_new, mu=mu_new, sigma=sigma_new,
                            theta_s=th_s, theta_e=th_e)
        )
    new_gaps = []
    for gap in p.pen_gaps:
        dur_s = _resample_positive(gap.duration_ms / 1000.0, n.sd_t0, rng, relative=False)
        new_gaps.append(PenGap(gap.after_stroke, dur_s * 1000.0))
    return replace(p, strokes=tuple(new_strokes), pen_gaps=tuple(new_gaps))


def reconstruction_snr(observed, rebuilt) -> float:
    """Signal-to-noise ratio in dB between a speed profile and its rebuild.

    10*log10(sum v^2 / sum (v - v_hat)^2), capped at the 300 dB sentinel
    (used verbatim for exact matches).
    """
    obs = np.asarray(observed, dtype=np.float64)
    reb = np.asarray(rebuilt, dtype=np.float64)
    if obs.shape != reb.shape or obs.ndim != 1 or obs.size < 1:
        raise LengthMismatch(f"profiles have shapes {obs.shape} and {reb.shape}")
    err = float(np.sum((obs - reb) ** 2))
    sig = float(np.sum(obs**2))
    if err == 0.0:
        return SNR_SENTINEL_DB
    if sig == 0.0:
        return -SNR_SENTINEL_DB
    return min(10.0 * math.log10(sig / err), SNR_SENTINEL_DB)
