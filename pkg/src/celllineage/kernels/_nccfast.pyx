# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled exhaustive NCC placement search (hot loop of the tracker)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF VAR_EPS = 1e-12


def ncc_map(window, template):
    """Same contract as kernels.ncc_numpy.ncc_map."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] win = np.ascontiguousarray(window, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tpl = np.ascontiguousarray(template, dtype=np.float64)
    cdef Py_ssize_t wh = win.shape[0], ww = win.shape[1]
    cdef Py_ssize_t th = tpl.shape[0], tw = tpl.shape[1]
    if th > wh or tw > ww:
        raise ValueError("template larger than search window")
    cdef Py_ssize_t oh = wh - th + 1, ow = ww - tw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((oh, ow), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t0 = tpl - tpl.mean()
    cdef double t_ss = 0.0
    cdef Py_ssize_t i, j, r, c
    for i in range(th):
        for j in range(tw):
            t_ss += t0[i, j] * t0[i, j]
    if t_ss <= VAR_EPS:
        return out
    cdef double n = <double>(th * tw)
    cdef double cross, s1, s2, var, v, score
    for r in range(oh):
        for c in range(ow):
            cross = 0.0
            s1 = 0.0
            s2 = 0.0
            for i in range(th):
                for j in range(tw):
                    v = win[r + i, c + j]
                    cross += v * t0[i, j]
                    s1 += v
                    s2 += v * v
            var = s2 - s1 * s1 / n
            if var <= VAR_EPS:
                out[r, c] = 0.0
            else:
                score = cross / sqrt(var * t_ss)
                if score > 1.0:
                    score = 1.0
                elif score < -1.0:
                    score = -1.0
                out[r, c] = score
    return out


def ncc_best(window, template):
    """Best placement (row, col, score); ties go to the row-major earliest."""
    scores = ncc_map(window, template)
    idx = int(np.argmax(scores))
    r, c = divmod(idx, scores.shape[1])
    return r, c, float(scores[r, c])
