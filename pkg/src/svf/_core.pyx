# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see ``_fallback`` for semantics)."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

BACKEND = "cython"

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def popcount_signed_matmul(a_words, bt_words, Py_ssize_t depth, int threads=1):
    cdef const cnp.uint64_t[:, ::1] a = np.ascontiguousarray(a_words, dtype=np.uint64)
    cdef const cnp.uint64_t[:, ::1] bt = np.ascontiguousarray(bt_words, dtype=np.uint64)
    cdef Py_ssize_t rows = a.shape[0], cols = bt.shape[0], nw = a.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, s, w
    cdef long long diff
    if threads < 1:
        threads = 1
    for r in prange(rows, nogil=True, num_threads=threads, schedule="static"):
        for s in range(cols):
            diff = 0
            for w in range(nw):
                diff = diff + __builtin_popcountll(a[r, w] ^ bt[s, w])
            out[r, s] = depth - 2 * diff
    return out_arr


def signed_binary_t_matmul(k_bits, v_bits):
    cdef const cnp.uint8_t[:, ::1] k = np.ascontiguousarray(k_bits, dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] v = np.ascontiguousarray(v_bits, dtype=np.uint8)
    cdef Py_ssize_t L = k.shape[0], dk = k.shape[1], dv = v.shape[1]
    out_arr = np.zeros((dk, dv), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t l, i, j
    cdef long long ops = 0
    for l in range(L):
        for j in range(dv):
            if v[l, j]:
                for i in range(dk):
                    if k[l, i]:
                        out[i, j] += 1
                    else:
                        out[i, j] -= 1
                ops += dk
    return out_arr, ops


def signed_int_matmul(q_bits, m):
    cdef const cnp.uint8_t[:, ::1] q = np.ascontiguousarray(q_bits, dtype=np.uint8)
    cdef const cnp.int64_t[:, ::1] mm = np.ascontiguousarray(m, dtype=np.int64)
    cdef Py_ssize_t L = q.shape[0], dk = q.shape[1], dv = mm.shape[1]
    out_arr = np.zeros((L, dv), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t l, i, j
    for l in range(L):
        for i in range(dk):
            if q[l, i]:
                for j in range(dv):
                    out[l, j] += mm[i, j]
            else:
                for j in range(dv):
                    out[l, j] -= mm[i, j]
    return out_arr, L * dk * dv


def int_binary_matmul(s, v_bits):
    cdef const cnp.int64_t[:, ::1] ss = np.ascontiguousarray(s, dtype=np.int64)
    cdef const cnp.uint8_t[:, ::1] v = np.ascontiguousarray(v_bits, dtype=np.uint8)
    cdef Py_ssize_t R = ss.shape[0], L = ss.shape[1], d = v.shape[1]
    out_arr = np.zeros((R, d), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, l, j
    cdef long long ops = 0
    for l in range(L):
        for j in range(d):
            if v[l, j]:
                for r in range(R):
                    out[r, j] += ss[r, l]
                ops += R
    return out_arr, ops


def binary_real_matmul(x_bits, w):
    cdef const cnp.uint8_t[:, ::1] x = np.ascontiguousarray(x_bits, dtype=np.uint8)
    cdef const double[:, ::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t R = x.shape[0], C = x.shape[1], D = ww.shape[1]
    out_arr = np.zeros((R, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, j
    cdef long long ops = 0
    for r in range(R):
        for c in range(C):
            if x[r, c]:
                for j in range(D):
                    out[r, j] += ww[c, j]
                ops += D
    return out_arr, ops


def lif_sequence(x, double beta, double threshold, bint reset_each_step=False, u0=None):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    shape = x_arr.shape
    cdef Py_ssize_t T = shape[0]
    cdef Py_ssize_t n = x_arr.size // T if T else 0
    cdef const double[:, ::1] xx = x_arr.reshape(T, n)
    if u0 is None:
        u_arr = np.zeros(n, dtype=np.float64)
    else:
        u_arr = np.array(u0, dtype=np.float64).reshape(n)
    cdef double[::1] u = u_arr
    s_arr = np.empty((T, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ss = s_arr
    cdef Py_ssize_t t, i
    cdef double h, b = 0.0 if reset_each_step else beta
    cdef cnp.uint8_t fire
    with nogil:
        for t in range(T):
            for i in range(n):
                h = b * u[i] + xx[t, i]
                fire = h > threshold
                ss[t, i] = fire
                u[i] = h - threshold * fire
    return s_arr.reshape(shape), u_arr.reshape(shape[1:])
