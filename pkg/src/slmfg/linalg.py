"""Small dense linear-algebra helpers with explicit thresholds."""

from __future__ import annotations

import numpy as np


def numerical_rank(A, rel_tol: float = 1e-9) -> int:
    """Rank by Gaussian elimination with complete pivoting.

    A pivot counts when its magnitude exceeds ``rel_tol`` times the largest
    pivot seen (the first one).
    """
    M = np.array(A, dtype=float, copy=True)
    if M.size == 0:
        return 0
    rows, cols = M.shape
    rank = 0
    first = None
    for k in range(min(rows, cols)):
        sub = np.abs(M[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        piv = sub[i, j]
        if first is None:
            first = piv
        if piv == 0.0 or piv <= rel_tol * first:
            break
        i += k
        j += k
        M[[k, i], :] = M[[i, k], :]
        M[:, [k, j]] = M[:, [j, k]]
        M[k + 1 :, k:] -= np.outer(M[k + 1 :, k] / M[k, k], M[k, k:])
        rank += 1
    return rank


def grid_axis(lo: float, hi: float, step: float, center: float = 0.0) -> np.ndarray:
    """Points ``center + k*step`` inside [lo, hi]; the center itself is hit exactly."""
    kmin = int(np.ceil((lo - center) / step - 1e-9))
    kmax = int(np.floor((hi - center) / step + 1e-9))
    ks = np.arange(kmin, kmax + 1)
    pts = center + ks * step
    return np.clip(pts, lo, hi)
