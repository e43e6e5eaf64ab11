"""Numpy DTW kernel: anti-diagonal dynamic program.

Fallback used when the compiled extension is unavailable. Produces values
bit-identical to the Cython kernel (each cell applies the same three-way
min and one addition in the same precision).
"""

from __future__ import annotations

import math

import numpy as np

_INF = math.inf


def dtw(a: np.ndarray, b: np.ndarray, band: int = -1, ub: float = _INF) -> float:
    """Unnormalized DTW distance with |.| local cost.

    band < 0 disables the Sakoe-Chiba constraint |i - j| <= band. When a
    finite upper bound `ub` is given, the scan may abandon once every cell
    of a diagonal exceeds it and return inf; any value < ub is exact.
    """
    n, m = a.size, b.size
    prev2 = np.empty(0)
    prev = np.empty(0)
    lo_prev2 = lo_prev = 0
    for k in range(n + m - 1):
        lo = max(0, k - m + 1)
        hi = min(k, n - 1)
        i = np.arange(lo, hi + 1)
        cost = np.abs(a[lo : hi + 1] - b[k - hi : k - lo + 1][::-1])
        if k == 0:
            cur = cost
        else:
            width = hi - lo + 1
            up = np.full(width, _INF)       # dp(i-1, j)
            left = np.full(width, _INF)     # dp(i,   j-1)
            diag = np.full(width, _INF)     # dp(i-1, j-1)
            src = i - 1 - lo_prev
            ok = (src >= 0) & (src < prev.size) & (i - 1 >= 0)
            up[ok] = prev[src[ok]]
            src = i - lo_prev
            ok = (src >= 0) & (src < prev.size) & (k - i - 1 >= 0)
            left[ok] = prev[src[ok]]
            if k >= 2:
                src = i - 1 - lo_prev2
                ok = (src >= 0) & (src < prev2.size) & (i - 1 >= 0) & (k - i - 1 >= 0)
                diag[ok] = prev2[src[ok]]
            cur = cost + np.minimum(np.minimum(up, left), diag)
        if band >= 0:
            off_band = np.abs(2 * i - k) > band
            if np.any(off_band):
                cur = cur.copy()
                cur[off_band] = _INF
        if ub != _INF and np.min(cur) > ub:
            return _INF
        prev2, lo_prev2 = prev, lo_prev
        prev, lo_prev = cur, lo
    return float(prev[-1])
