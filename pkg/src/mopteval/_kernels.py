"""Hot inner loops for the overlap pass.

The numba path is used by default; set MOPT_NO_NUMBA=1 to force the pure
numpy fallback. Both produce identical integer counts.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("MOPT_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _pair_counts_np(p_inv: np.ndarray, g_inv: np.ndarray, n_pred: int, n_gt: int) -> np.ndarray:
    if p_inv.size == 0:
        return np.zeros(n_pred * n_gt, dtype=np.int64)
    flat = p_inv.astype(np.int64) * n_gt + g_inv.astype(np.int64)
    return np.bincount(flat, minlength=n_pred * n_gt).astype(np.int64)


if USE_NUMBA:

    @njit(cache=True)
    def _pair_counts_loop(p_inv, g_inv, n_gt, size):  # pragma: no cover - compiled
        counts = np.zeros(size, dtype=np.int64)
        for i in range(p_inv.size):
            counts[p_inv[i] * n_gt + g_inv[i]] += 1
        return counts

    def pair_counts(p_inv: np.ndarray, g_inv: np.ndarray, n_pred: int, n_gt: int) -> np.ndarray:
        """Flattened (n_pred x n_gt) co-occurrence counts of segment indices."""
        if p_inv.size == 0:
            return np.zeros(n_pred * n_gt, dtype=np.int64)
        return _pair_counts_loop(
            p_inv.astype(np.int64), g_inv.astype(np.int64), n_gt, n_pred * n_gt
        )

else:
    pair_counts = _pair_counts_np
