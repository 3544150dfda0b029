"""Dynamic time warping with absolute-difference local cost and an optional
Sakoe-Chiba band.  Used as the precise-matching baseline engine and by the
sketch scorer's "dtw" metric.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


def dtw_distance(a: Sequence[float], b: Sequence[float], band: Optional[int] = None) -> float:
    """Classic DTW: monotone alignment minimizing sum |a_i - b_j|.

    ``band`` restricts |i - j| (the Sakoe-Chiba window); band=0 on equal
    lengths degenerates to the diagonal, i.e. sum of pointwise distances.
    Symmetric in its arguments and 0 on identical series.
    """
    xs = np.asarray(a, dtype=np.float64)
    ys = np.asarray(b, dtype=np.float64)
    n, m = len(xs), len(ys)
    if n == 0 or m == 0:
        raise ValueError("dtw needs non-empty series")
    if band is not None and band < abs(n - m):
        # A narrower band than the length difference has no complete path.
        band = abs(n - m)

    inf = float("inf")
    prev = np.full(m + 1, inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(1, n + 1):
        cur[:] = inf
        if band is None:
            j_lo, j_hi = 1, m
        else:
            j_lo = max(1, i - band)
            j_hi = min(m, i + band)
        for j in range(j_lo, j_hi + 1):
            cost = abs(xs[i - 1] - ys[j - 1])
            cur[j] = cost + min(prev[j], cur[j - 1], prev[j - 1])
        prev, cur = cur, prev
    return float(prev[m])
