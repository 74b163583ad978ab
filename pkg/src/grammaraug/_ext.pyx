# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: CTC forward scoring and grammar-mask evaluation."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log1p
from libc.stdlib cimport free, malloc

cnp.import_array()

NEG_INF = -np.inf


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef Py_ssize_t _min_frames(const long long[::1] label, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i, n = hi - lo
    for i in range(lo + 1, hi):
        if label[i] == label[i - 1]:
            n += 1
    return n


cdef double _forward(const double[:, ::1] logp, const long long[::1] label,
                     Py_ssize_t lo, Py_ssize_t hi, long long blank,
                     double* prev, double* cur) noexcept nogil:
    cdef Py_ssize_t T = logp.shape[0]
    cdef Py_ssize_t L = hi - lo
    cdef Py_ssize_t S = 2 * L + 1
    cdef Py_ssize_t t, s
    cdef long long sym
    cdef double acc
    cdef double* tmp
    if L == 0 or T < _min_frames(label, lo, hi):
        return -INFINITY
    for s in range(S):
        prev[s] = -INFINITY
    prev[0] = logp[0, blank]
    prev[1] = logp[0, label[lo]]
    for t in range(1, T):
        for s in range(S):
            acc = prev[s]
            if s >= 1:
                acc = _logaddexp(acc, prev[s - 1])
            if s % 2 == 1:
                sym = label[lo + s // 2]
                if s >= 3 and sym != label[lo + s // 2 - 1]:
                    acc = _logaddexp(acc, prev[s - 2])
            else:
                sym = blank
            cur[s] = acc + logp[t, sym]
        tmp = prev
        prev = cur
        cur = tmp
    return _logaddexp(prev[S - 1], prev[S - 2])


def min_frames(label):
    cdef long long[::1] lab = np.ascontiguousarray(label, dtype=np.int64)
    return int(_min_frames(lab, 0, lab.shape[0]))


def ctc_logprob(logp, label, long long blank):
    cdef const double[:, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(label, dtype=np.int64)
    cdef Py_ssize_t S = 2 * lab.shape[0] + 1
    cdef double* buf = <double*> malloc(2 * S * sizeof(double))
    cdef double out
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            out = _forward(lp, lab, 0, lab.shape[0], blank, buf, buf + S)
    finally:
        free(buf)
    return out


def ctc_logprob_many(logp, labels_flat, offsets, long long blank):
    cdef const double[:, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(labels_flat, dtype=np.int64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n = off.shape[0] - 1
    cdef Py_ssize_t i, longest = 0
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        if off[i + 1] - off[i] > longest:
            longest = off[i + 1] - off[i]
    cdef Py_ssize_t S = 2 * longest + 1
    cdef double* buf = <double*> malloc(2 * S * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                out[i] = _forward(lp, lab, off[i], off[i + 1], blank, buf, buf + S)
    finally:
        free(buf)
    return out_arr


cdef inline void _row_max(const double* src, double* acc, Py_ssize_t n) noexcept nogil:
    # branch-free form so the loop vectorizes
    cdef Py_ssize_t j
    for j in range(n):
        acc[j] = src[j] if src[j] > acc[j] else acc[j]


def ood_max(ood_scores, rows):
    cdef const double[:, ::1] sc = np.ascontiguousarray(ood_scores, dtype=np.float64)
    cdef const long long[::1] rw = np.ascontiguousarray(rows, dtype=np.int64)
    cdef Py_ssize_t n = sc.shape[1]
    cdef Py_ssize_t i
    out_arr = np.full(n, -np.inf)
    if n == 0:
        return out_arr
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(rw.shape[0]):
            _row_max(&sc[rw[i], 0], &out[0], n)
    return out_arr


def threshold_from_max(om, Py_ssize_t n_allowed):
    cdef Py_ssize_t k = om.shape[0] - 1 - n_allowed
    if k < 0:
        return NEG_INF
    return float(np.partition(om, k)[k])


cdef void _decode(const double[:, ::1] sc, const long long[::1] rw,
                  const long long[::1] row_cmd, Py_ssize_t n_cmd, double tau,
                  double* per_cmd, long long[::1] out) noexcept nogil:
    # per_cmd is n_cmd x n, filled row by row so reads stay contiguous
    cdef Py_ssize_t n = sc.shape[1]
    cdef Py_ssize_t i, j, c, r, arg
    cdef double v, best
    for j in range(n_cmd * n):
        per_cmd[j] = -INFINITY
    if n == 0:
        return
    for i in range(rw.shape[0]):
        r = rw[i]
        _row_max(&sc[r, 0], per_cmd + row_cmd[r] * n, n)
    for j in range(n):
        best = per_cmd[j]
        arg = 0
        for c in range(1, n_cmd):
            v = per_cmd[c * n + j]
            if v > best:
                best = v
                arg = c
        out[j] = -1 if best <= tau else arg


def decode_columns(in_scores, rows, row_cmd, Py_ssize_t n_cmd, double tau):
    cdef const double[:, ::1] sc = np.ascontiguousarray(in_scores, dtype=np.float64)
    cdef const long long[::1] rw = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const long long[::1] rc = np.ascontiguousarray(row_cmd, dtype=np.int64)
    out_arr = np.empty(sc.shape[1], dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef double* per_cmd = <double*> malloc(max(n_cmd * sc.shape[1], 1) * sizeof(double))
    if per_cmd == NULL:
        raise MemoryError()
    try:
        with nogil:
            _decode(sc, rw, rc, n_cmd, tau, per_cmd, out)
    finally:
        free(per_cmd)
    return out_arr


def eval_counts(in_scores, ood_scores, rows, row_cmd, targets, Py_ssize_t n_cmd,
                Py_ssize_t n_allowed):
    cdef const long long[::1] tg = np.ascontiguousarray(targets, dtype=np.int64)
    om = ood_max(ood_scores, rows)
    cdef double tau = threshold_from_max(om, n_allowed) if om.shape[0] else NEG_INF
    cdef const double[::1] omv = om
    cdef Py_ssize_t j, n_far = 0, n_phi = 0, n_wrong = 0
    for j in range(omv.shape[0]):
        if omv[j] > tau:
            n_far += 1
    cdef long long[::1] dec = decode_columns(in_scores, rows, row_cmd, n_cmd, tau)
    for j in range(dec.shape[0]):
        if dec[j] < 0:
            n_phi += 1
        elif dec[j] != tg[j]:
            n_wrong += 1
    return tau, n_far, n_phi, n_wrong
