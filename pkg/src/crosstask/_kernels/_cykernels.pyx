# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled per-pixel scoring kernels.

Semantics mirror ``pykernels`` exactly; see that module for the input
contracts. Accumulation is in double precision in both backends.
"""
from libc.math cimport log

import numpy as np

BACKEND_NAME = "compiled"


def count_equal_where(const int[:, ::1] labels, const unsigned char[:, ::1] mask, int cls):
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    if mask.shape[0] != h or mask.shape[1] != w:
        raise ValueError("labels and mask dimensions differ")
    cdef Py_ssize_t i, j
    cdef long long total = 0
    for i in range(h):
        for j in range(w):
            # branchless: selected-and-equal contributes 1
            total += (mask[i, j] != 0) & (labels[i, j] == cls)
    return int(total)


def count_member_where(const int[:, ::1] labels, const unsigned char[:, ::1] mask,
                       const unsigned char[::1] member):
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    if mask.shape[0] != h or mask.shape[1] != w:
        raise ValueError("labels and mask dimensions differ")
    cdef Py_ssize_t n_classes = member.shape[0]
    cdef Py_ssize_t i, j
    cdef long long total = 0
    cdef int lab
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                lab = labels[i, j]
                if 0 <= lab < n_classes and member[lab]:
                    total += 1
    return int(total)


def sym_kl_sum_where(const float[:, :, ::1] probs, const unsigned char[:, ::1] mask,
                     const double[::1] ref, double eps):
    cdef Py_ssize_t c = probs.shape[0]
    cdef Py_ssize_t h = probs.shape[1]
    cdef Py_ssize_t w = probs.shape[2]
    if mask.shape[0] != h or mask.shape[1] != w:
        raise ValueError("probs and mask dimensions differ")
    if ref.shape[0] != c:
        raise ValueError("reference distribution length differs from channel count")

    # ref is constant across pixels; precompute its floored logs
    log_q_arr = np.empty(c, dtype=np.float64)
    cdef double[::1] log_q = log_q_arr
    cdef Py_ssize_t k
    for k in range(c):
        log_q[k] = log(ref[k] if ref[k] > eps else eps)

    cdef double total = 0.0, p, lp
    cdef Py_ssize_t i, j
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                for k in range(c):
                    p = probs[k, i, j]
                    lp = log(p if p > eps else eps)
                    total += (p - ref[k]) * (lp - log_q[k])
    return total
