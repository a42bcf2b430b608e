"""Vectorized numpy fallback for the exhaustive NCC placement search."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_VAR_EPS = 1e-12


def ncc_map(window, template):
    """Zero-normalized cross-correlation of `template` at every placement.

    Returns a float64 map of shape (wh - th + 1, ww - tw + 1); placements
    where the candidate patch has (numerically) zero variance score 0.
    """
    window = np.ascontiguousarray(window, dtype=np.float64)
    template = np.ascontiguousarray(template, dtype=np.float64)
    th, tw = template.shape
    if th > window.shape[0] or tw > window.shape[1]:
        raise ValueError("template larger than search window")
    n = th * tw
    t0 = template - template.mean()
    t_ss = float(np.sum(t0 * t0))
    out_shape = (window.shape[0] - th + 1, window.shape[1] - tw + 1)
    if t_ss <= _VAR_EPS:
        return np.zeros(out_shape)
    patches = sliding_window_view(window, (th, tw))
    # sum(t0) == 0, so the cross term needs no patch-mean subtraction
    cross = np.tensordot(patches, t0, axes=([2, 3], [0, 1]))
    s1 = patches.sum(axis=(2, 3))
    s2 = np.einsum("ijkl,ijkl->ij", patches, patches)
    var = s2 - s1 * s1 / n
    np.clip(var, 0.0, None, out=var)
    denom = np.sqrt(var * t_ss)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = cross / denom
    scores[var <= _VAR_EPS] = 0.0
    return np.clip(scores, -1.0, 1.0)


def ncc_best(window, template):
    """Best placement (row, col, score); ties go to the row-major earliest."""
    scores = ncc_map(window, template)
    idx = int(np.argmax(scores))
    r, c = divmod(idx, scores.shape[1])
    return r, c, float(scores[r, c])
