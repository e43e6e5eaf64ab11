"""Reconstruction of sigma-lognormal parameters from observed samples, and
the human -> machine counterpart factory built on top of it.

The extractor works per pen-down segment on the smoothed pen-speed profile
(px/s over seconds):

1. locate speed maxima, merging neighbors unless the valley between them
   drops below 70% of the smaller peak;
2. initialize each stroke from its mode geometry: with half-height
   crossings t1 < t_max < t2, the onset solves
   (t_max - t0)^2 = (t1 - t0)(t2 - t0), sigma follows from the half-height
   width ratio ln((t2-t0)/(t1-t0)) / (2 sqrt(2 ln 2)),
   mu = ln(t_max - t0) + sigma^2, D from the peak amplitude, and the
   angles from trajectory tangents at the 5%/95% cumulative-area times;
3. refine every parameter of every stroke by coordinate-descent least
   squares on the speed profile, fitting strokes against the residual of
   the others.

In-air intervals of multistroke samples are modeled as explicit straight
"bridge" strokes spanning each gap, placed right after the corresponding
pen-gap index so the synthesizer keeps them un-inked (see penlive.slm).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erf

from .data import Dataset, StrokeLog, canonicalize
from .errors import FitFailure, TooShort
from .slm import (
    LognormalStroke,
    NoiseConfig,
    PenGap,
    SigmaLognormalParams,
    derive_rng,
    perturb,
    plan_velocity,
    reconstruction_snr,
    synthesize,
)

HALF_WIDTH_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
# plausible log-response-time range for pen strokes; the ceiling also keeps
# reconstruction supports (and with them synthesis grids) short
SIGMA_MIN, SIGMA_MAX = 0.02, 0.8


@dataclass(frozen=True)
class ExtractConfig:
    max_strokes: int = 12          # lognormal strokes per pen-down segment
    smooth_window: int = 3
    valley_ratio: float = 0.7
    min_peak_rel: float = 0.04     # ignore residual peaks below this x global max
    refine_passes: int = 2
    snr_target_db: float = 40.0    # stop adding strokes once a segment fits this well


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with the window clipped at the edges."""
    if window <= 1:
        return x.astype(np.float64, copy=True)
    half = window // 2
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x, dtype=np.float64)))
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


@dataclass
class _Segment:
    t_pts: np.ndarray      # point times, seconds, sample-global axis
    xy: np.ndarray         # (n, 2) point positions
    tm: np.ndarray         # midpoint times of the speed samples
    speed: np.ndarray      # smoothed observed speed, px/s
    strokes: list


def _segment_data(arr: np.ndarray, t_offset_ms: float, window: int) -> Optional[_Segment]:
    t = (arr[:, 2] - t_offset_ms) / 1000.0
    if arr.shape[0] < 2:
        return None
    d = np.diff(arr[:, :2], axis=0)
    dt = np.diff(t)
    speed = np.hypot(d[:, 0], d[:, 1]) / dt
    return _Segment(
        t_pts=t,
        xy=arr[:, :2].copy(),
        tm=(t[:-1] + t[1:]) / 2.0,
        speed=moving_average(speed, window),
        strokes=[],
    )


def _tangent_angle(seg: _Segment, when: float) -> float:
    i = int(np.clip(np.searchsorted(seg.t_pts, when), 1, len(seg.t_pts) - 1))
    lo, hi = max(i - 1, 0), min(i + 1, len(seg.t_pts) - 1)
    delta = seg.xy[hi] - seg.xy[lo]
    if not np.any(delta):
        delta = seg.xy[-1] - seg.xy[0]
    return math.atan2(delta[1], delta[0])


def _peak_region(resid: np.ndarray, idx: int, valley_ratio: float) -> tuple[int, int]:
    """Inclusive index range owned by the peak at idx.

    Walking away from the peak, the region ends at the deepest minimum
    once a qualifying separation appears: the running minimum has dropped
    below valley_ratio times the smaller of the two peaks it separates.
    """
    peak = resid[idx]

    def walk(direction: int) -> int:
        best_min, best_pos = peak, idx
        k = idx
        while 0 <= k + direction < resid.size:
            k += direction
            v = resid[k]
            if v <= best_min:
                best_min, best_pos = v, k
            elif best_min < valley_ratio * min(peak, v):
                return best_pos
        return k

    return walk(-1), walk(+1)


def _half_crossing(tm, resid, idx, half, direction, lo, hi) -> Optional[float]:
    j = idx
    while lo <= j + direction <= hi:
        nxt = j + direction
        if resid[nxt] <= half:
            # linear interpolation between j and nxt
            span = resid[j] - resid[nxt]
            frac = (resid[j] - half) / span if span > 0 else 0.5
            return float(tm[j] + frac * (tm[nxt] - tm[j]))
        j = nxt
    return None


def _refine_peak(tm: np.ndarray, resid: np.ndarray, idx: int) -> tuple[float, float]:
    """Sub-grid peak location and height via parabolic interpolation."""
    if 0 < idx < resid.size - 1:
        y0, y1, y2 = resid[idx - 1], resid[idx], resid[idx + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0:
            shift = 0.5 * (y0 - y2) / denom
            if abs(shift) <= 1.0:
                t_max = float(np.interp(idx + shift, np.arange(resid.size), tm))
                v_max = float(y1 - 0.25 * (y0 - y2) * shift)
                return t_max, v_max
    return float(tm[idx]), float(resid[idx])


def _init_stroke(seg: _Segment, resid: np.ndarray, idx: int,
                 valley_ratio: float) -> Optional[LognormalStroke]:
    tm = seg.tm
    if resid[idx] <= 0:
        return None
    lo, hi = _peak_region(resid, idx, valley_ratio)
    t_max, vmax = _refine_peak(tm, resid, idx)
    half = vmax / 2.0
    t1 = _half_crossing(tm, resid, idx, half, -1, lo, hi)
    t2 = _half_crossing(tm, resid, idx, half, +1, lo, hi)
    if t1 is None and t2 is None:
        width = max((tm[hi] - tm[lo]) / 4.0, 1e-3)
        t1, t2 = t_max - width / 2.0, t_max + width / 2.0
    elif t1 is None:
        t1 = t_max - 0.8 * (t2 - t_max)
    elif t2 is None:
        t2 = t_max + 1.2 * (t_max - t1)
    width = t2 - t1
    if width <= 0:
        return None

    denom = 2.0 * t_max - t1 - t2
    if abs(denom) > 1e-9:
        t0 = (t_max * t_max - t1 * t2) / denom
    else:
        t0 = t_max - 4.0 * width  # symmetric peak: push the onset far left
    t0 = min(t0, t1 - 1e-4)
    t0 = max(t0, t_max - 8.0 * width)

    sigma = math.log((t2 - t0) / (t1 - t0)) / HALF_WIDTH_FACTOR
    sigma = min(max(sigma, SIGMA_MIN), SIGMA_MAX)
    if _from_geometry(t0, t_max, vmax, sigma, 0.0, 0.0) is None:
        return None

    # direction from tangents at the 5%/95% cumulative-area times of the
    # peak's own region
    region = resid[lo : hi + 1]
    tm_r = tm[lo : hi + 1]
    area = np.concatenate(([0.0], np.cumsum((region[:-1] + region[1:]) / 2.0 * np.diff(tm_r))))
    total = area[-1]
    if total <= 0:
        return None
    lo_t = float(np.interp(0.05 * total, area, tm_r))
    hi_t = float(np.interp(0.95 * total, area, tm_r))
    th_s = _tangent_angle(seg, lo_t)
    th_e = _tangent_angle(seg, hi_t)
    th_e = th_e - 2.0 * math.pi * round((th_e - th_s) / (2.0 * math.pi))
    return _from_geometry(t0, t_max, vmax, sigma, th_s, th_e)


def _to_geometry(s: LognormalStroke) -> tuple[float, float, float, float, float, float]:
    """(t0, peak time, peak speed, sigma, theta_s, theta_e) for a stroke."""
    t_peak = s.t0 + math.exp(s.mu - s.sigma * s.sigma)
    v_max = s.D / (s.sigma * math.sqrt(2.0 * math.pi)) * math.exp(s.sigma**2 / 2.0 - s.mu)
    return s.t0, t_peak, v_max, s.sigma, s.theta_s, s.theta_e


_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _geom_velocity(tm: np.ndarray, geom) -> Optional[np.ndarray]:
    """Velocity contribution of one stroke given in geometric coordinates.

    Lean search-loop variant of plan_velocity: no dataclass construction,
    bounds checked inline, branchless before-onset handling (the clamped
    log-time argument drives the Gaussian factor to exactly 0). Returns
    None for out-of-bounds geometry.
    """
    t0, t_peak, v_max, sigma, th_s, th_e = geom
    if not (t_peak > t0 and v_max > 0 and SIGMA_MIN <= sigma <= SIGMA_MAX):
        return None
    if not (math.isfinite(t0) and math.isfinite(v_max) and math.isfinite(th_s)
            and math.isfinite(th_e)):
        return None
    mu = math.log(t_peak - t0) + sigma * sigma
    dtp = np.maximum(tm - t0, 1e-300)
    z = (np.log(dtp) - mu) / sigma
    speed = v_max * np.exp(mu - 0.5 * sigma * sigma - 0.5 * z * z) / dtp
    phi = th_s + (th_e - th_s) * 0.5 * (1.0 + erf(z * _INV_SQRT2))
    return np.stack([speed * np.cos(phi), speed * np.sin(phi)], axis=1)


def _from_geometry(t0, t_peak, v_max, sigma, th_s, th_e) -> Optional[LognormalStroke]:
    if not (t_peak > t0 and v_max > 0 and SIGMA_MIN <= sigma <= SIGMA_MAX):
        return None
    if not all(map(math.isfinite, (t0, t_peak, v_max, sigma, th_s, th_e))):
        return None
    mu = math.log(t_peak - t0) + sigma * sigma
    d_amp = v_max * sigma * math.sqrt(2.0 * math.pi) * math.exp(mu - sigma * sigma / 2.0)
    if not (math.isfinite(d_amp) and d_amp > 0):
        return None
    return LognormalStroke(D=d_amp, t0=t0, mu=mu, sigma=sigma, theta_s=th_s, theta_e=th_e)


def _segment_model_speed(strokes, tm: np.ndarray) -> np.ndarray:
    if not strokes:
        return np.zeros_like(tm)
    return np.hypot(*plan_velocity(strokes, tm).T)


def _refine_segment(seg: _Segment, cfg: ExtractConfig) -> None:
    """Coordinate-descent least squares on the segment's speed profile.

    Each stroke is fit against the cached residual velocity field of the
    others. The search runs in geometric coordinates (onset, peak time,
    peak speed, sigma, angles): raw (t0, mu, sigma) trade off along a
    nearly flat valley, while these axes decouple skew, location, height
    and width.
    """
    tm, obs = seg.tm, seg.speed
    comps = [plan_velocity([s], tm) for s in seg.strokes]
    total = np.sum(comps, axis=0)

    for _ in range(cfg.refine_passes):
        for si in range(len(seg.strokes)):
            others = total - comps[si]
            stroke = seg.strokes[si]

            # the stroke only shapes the profile near its own support, so
            # the least squares can run on that window
            rise = math.exp(stroke.mu - stroke.sigma**2)
            lo = int(np.searchsorted(tm, stroke.t0 - 1.5 * rise))
            hi = int(np.searchsorted(tm, stroke.support_end + 1.5 * rise))
            if hi - lo < 5:
                lo, hi = 0, tm.size
            tm_w, obs_w, others_w = tm[lo:hi], obs[lo:hi], others[lo:hi]

            def cost_of(geometry) -> Optional[float]:
                v = _geom_velocity(tm_w, geometry)
                if v is None:
                    return None
                v = v + others_w
                return float(np.sum((obs_w - np.hypot(v[:, 0], v[:, 1])) ** 2))

            geom = list(_to_geometry(stroke))
            cur_cost = cost_of(geom)
            # require solid improvement; on axes the objective ignores
            # (e.g. angles of a lone stroke) float noise must not walk
            min_gain = 1e-9 * max(cur_cost, 1e-30)
            for axis, step0 in (
                (0, 0.35 * rise),     # onset (skew at fixed peak)
                (1, 0.10 * rise),     # peak time
                (2, 0.10 * geom[2]),  # peak speed
                (3, 0.15 * geom[3]),  # sigma
                (4, 0.2),             # theta_s
                (5, 0.2),             # theta_e
            ):
                step = step0
                for _ in range(7):
                    improved = False
                    for delta in (-step, step):
                        trial_geom = geom.copy()
                        trial_geom[axis] += delta
                        c = cost_of(trial_geom)
                        if c is not None and c < cur_cost - min_gain:
                            geom, cur_cost = trial_geom, c
                            improved = True
                            break
                    if not improved:
                        step *= 0.5
                        if step < 1e-6 * max(abs(geom[axis]), 1e-3):
                            break
            refined = _from_geometry(*geom)
            if refined is not None:
                seg.strokes[si] = refined
            comps[si] = plan_velocity([seg.strokes[si]], tm)
            total = others + comps[si]


def _with_param(s: LognormalStroke, name: str, value: float) -> Optional[LognormalStroke]:
    fields = {"D": s.D, "t0": s.t0, "mu": s.mu, "sigma": s.sigma,
              "theta_s": s.theta_s, "theta_e": s.theta_e}
    fields[name] = value
    if fields["D"] <= 0 or not (SIGMA_MIN <= fields["sigma"] <= SIGMA_MAX):
        return None
    if not math.isfinite(value):
        return None
    return LognormalStroke(**fields)


def _fit_segment(seg: _Segment, vmax_global: float, cfg: ExtractConfig) -> None:
    obs = seg.speed
    for _ in range(cfg.max_strokes):
        resid = obs - _segment_model_speed(seg.strokes, seg.tm)
        np.clip(resid, 0.0, None, out=resid)
        idx = int(np.argmax(resid))
        if resid[idx] < cfg.min_peak_rel * vmax_global:
            break
        stroke = _init_stroke(seg, resid, idx, cfg.valley_ratio)
        if stroke is None:
            break
        seg.strokes.append(stroke)
        if reconstruction_snr(obs, _segment_model_speed(seg.strokes, seg.tm)) >= cfg.snr_target_db:
            break
    if seg.strokes:
        _refine_segment(seg, cfg)
        seg.strokes.sort(key=lambda s: s.t0)


def _make_bridge(t_start: float, t_end: float, p_from: np.ndarray, p_to: np.ndarray) -> LognormalStroke:
    gap = max(t_end - t_start, 1e-3)
    jump = p_to - p_from
    dist = float(np.hypot(*jump))
    angle = math.atan2(jump[1], jump[0]) if dist > 0 else 0.0
    sigma = 0.3
    mu = math.log(0.9 * gap) - 5.0 * sigma  # support ends just inside the gap
    return LognormalStroke(D=max(dist, 0.1), t0=t_start, mu=mu, sigma=sigma,
                           theta_s=angle, theta_e=angle)


def extract(s: StrokeLog, cfg: ExtractConfig = ExtractConfig()) -> tuple[SigmaLognormalParams, float]:
    """Fit a sigma-lognormal plan to a canonical sample.

    Returns the plan and the reconstruction SNR (dB) of its speed profile
    against the observed, smoothed one. Raises TooShort below 4 points and
    FitFailure when no speed peak can be fit anywhere.
    """
    if s.num_points < 4:
        raise TooShort(f"sample {s.id!r} has {s.num_points} points, need >= 4")
    t_offset = s.strokes[0][0].t
    segments = []
    for arr in s.stroke_arrays():
        seg = _segment_data(arr, t_offset, cfg.smooth_window)
        if seg is not None and seg.speed.size >= 1:
            segments.append(seg)
    if not segments:
        raise FitFailure(f"sample {s.id!r} has no segment with measurable speed")

    vmax_global = max(float(seg.speed.max()) for seg in segments)
    if vmax_global <= 0:
        raise FitFailure(f"sample {s.id!r} never moves")

    for seg in segments:
        if seg.speed.size >= 3:
            _fit_segment(seg, vmax_global, cfg)
    used = [seg for seg in segments if seg.strokes]
    if not used:
        raise FitFailure(f"no lognormal stroke could be fit for sample {s.id!r}")

    strokes: list[LognormalStroke] = []
    gaps: list[PenGap] = []
    for i, seg in enumerate(used):
        strokes.extend(seg.strokes)
        if i + 1 < len(used):
            nxt = used[i + 1]
            gap_start = float(seg.t_pts[-1])
            gap_end = float(nxt.t_pts[0])
            if gap_end - gap_start > 1e-6:
                gaps.append(PenGap(len(strokes) - 1, (gap_end - gap_start) * 1000.0))
                strokes.append(_make_bridge(gap_start, gap_end, seg.xy[-1], nxt.xy[0]))

    # enforce the non-decreasing onset invariant across segment boundaries
    mono = []
    prev_t0 = -math.inf
    for st in strokes:
        t0 = max(st.t0, prev_t0)
        mono.append(st if t0 == st.t0 else _with_param(st, "t0", t0))
        prev_t0 = t0

    params = SigmaLognormalParams(
        strokes=tuple(mono),
        origin=(float(used[0].xy[0, 0]), float(used[0].xy[0, 1])),
        pen_gaps=tuple(gaps),
    )
    obs_all = np.concatenate([seg.speed for seg in used])
    model_all = np.concatenate(
        [_segment_model_speed([st for st in mono], seg.tm) for seg in used]
    )
    return params, reconstruction_snr(obs_all, model_all)


# ---------------------------------------------------------------------------
# counterpart generation


def _counterparts_for_sample(args):
    sample, noise, per_sample, rate_hz, cfg = args
    try:
        canon = canonicalize(sample)
        params, snr = extract(canon, cfg)
    except (TooShort, FitFailure) as exc:
        return sample.id, None, {"id": sample.id, "status": "skipped",
                                 "snr_db": None, "num_strokes": None}, str(exc)
    replicas = []
    for r in range(1, per_sample + 1):
        rng = derive_rng(noise.rng_seed, sample.id, r)
        jittered = perturb(params, noise, rng)
        replicas.append(
            synthesize(
                jittered,
                rate_hz,
                sample_id=f"{sample.id}-syn{r}",
                symbol_class=sample.symbol_class,
                writer=sample.writer,
                device=sample.device,
            )
        )
    report = {"id": sample.id, "status": "ok", "snr_db": round(snr, 3),
              "num_strokes": len(params.strokes)}
    return sample.id, replicas, report, None


def generate_counterparts(
    d: Dataset,
    noise: NoiseConfig,
    per_sample: int = 1,
    *,
    rate_hz: float = 100.0,
    extract_cfg: ExtractConfig = ExtractConfig(),
    jobs: int = 1,
) -> tuple[Dataset, list[dict]]:
    """extract -> perturb -> synthesize for every human sample.

    Returns the synthetic dataset (ids suffixed -synN, metadata copied)
    plus one report row per source sample. Samples whose extraction fails
    are skipped and reported, never fatal. Each replica's noise stream
    depends only on (rng_seed, sample id, replica index), so results do
    not depend on the worker count.
    """
    if per_sample < 1:
        raise ValueError("per_sample must be >= 1")
    humans = [s for s in d.samples if s.label == "human"]
    tasks = [(s, noise, per_sample, rate_hz, extract_cfg) for s in humans]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_counterparts_for_sample, tasks, chunksize=8))
    else:
        results = [_counterparts_for_sample(t) for t in tasks]
    out = []
    reports = []
    for _, replicas, report, _ in results:
        reports.append(report)
        if replicas:
            out.extend(replicas)
    return Dataset(samples=tuple(out), name=f"{d.name}-synthetic"), reports
