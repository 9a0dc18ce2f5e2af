"""Numpy implementations of the per-pixel scoring kernels.

These are the reference semantics; the compiled twin in ``_cykernels.pyx``
must agree with them. Input contracts shared by both backends:

- ``labels``: int32, C-contiguous, shape (H, W)
- ``mask``:   uint8, C-contiguous, shape (H, W); nonzero means selected
- ``probs``:  float32, C-contiguous, shape (C, H, W)
- ``ref``:    float64, shape (C,)
- ``member``: uint8 lookup table, shape (n_classes,)
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def count_equal_where(labels: np.ndarray, mask: np.ndarray, cls: int) -> int:
    """Number of selected pixels whose label equals ``cls``."""
    return int(np.count_nonzero((labels == cls) & (mask != 0)))


def count_member_where(labels: np.ndarray, mask: np.ndarray, member: np.ndarray) -> int:
    """Number of selected pixels whose label is flagged in ``member``."""
    sel = labels[mask != 0]
    if sel.size == 0:
        return 0
    return int(np.count_nonzero(member[sel]))


def sym_kl_sum_where(
    probs: np.ndarray, mask: np.ndarray, ref: np.ndarray, eps: float
) -> float:
    """Sum over selected pixels of the symmetric KL divergence between the
    pixel's distribution and ``ref``, natural log, with probabilities
    floored at ``eps`` inside the logs (multipliers stay unfloored).

    Per pixel the two directions collapse to
    ``sum_k (p_k - q_k) * (log(max(p_k, eps)) - log(max(q_k, eps)))``,
    which is symmetric and non-negative term by term.
    """
    sel = probs[:, mask != 0].astype(np.float64)  # (C, n)
    if sel.shape[1] == 0:
        return 0.0
    q = np.asarray(ref, dtype=np.float64)[:, None]
    log_p = np.log(np.maximum(sel, eps))
    log_q = np.log(np.maximum(q, eps))
    return float(((sel - q) * (log_p - log_q)).sum())
