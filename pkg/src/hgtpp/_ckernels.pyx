# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def attention_forward(double[:, :, ::1] q, double[:, :, ::1] k, double[:, :, ::1] v,
                      cnp.npy_bool[:, ::1] qmask, cnp.npy_bool[:, ::1] kmask,
                      bint exclude_self):
    cdef Py_ssize_t B = q.shape[0], Kq = q.shape[1], Kk = k.shape[1], d = q.shape[2]
    out_arr = np.zeros((B, Kq, d), dtype=np.float64)
    alpha_arr = np.zeros((B, Kq, Kk), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, ::1] alpha = alpha_arr
    cdef Py_ssize_t b, i, j, c
    cdef double s, top, norm, a
    cdef bint any_valid
    with nogil:
        for b in range(B):
            for i in range(Kq):
                if not qmask[b, i]:
                    continue
                any_valid = False
                top = 0.0
                for j in range(Kk):
                    if not kmask[b, j] or (exclude_self and i == j):
                        continue
                    s = 0.0
                    for c in range(d):
                        s = s + q[b, i, c] * k[b, j, c]
                    alpha[b, i, j] = s
                    if not any_valid or s > top:
                        top = s
                    any_valid = True
                if not any_valid:
                    continue
                norm = 0.0
                for j in range(Kk):
                    if not kmask[b, j] or (exclude_self and i == j):
                        continue
                    a = exp(alpha[b, i, j] - top)
                    alpha[b, i, j] = a
                    norm = norm + a
                for j in range(Kk):
                    if not kmask[b, j] or (exclude_self and i == j):
                        continue
                    a = alpha[b, i, j] / norm
                    alpha[b, i, j] = a
                    for c in range(d):
                        out[b, i, c] = out[b, i, c] + a * v[b, j, c]
    return out_arr, alpha_arr


def attention_backward(double[:, :, ::1] grad, double[:, :, ::1] q, double[:, :, ::1] k,
                       double[:, :, ::1] v, double[:, :, ::1] alpha):
    cdef Py_ssize_t B = q.shape[0], Kq = q.shape[1], Kk = k.shape[1], d = q.shape[2]
    dq_arr = np.zeros((B, Kq, d), dtype=np.float64)
    dk_arr = np.zeros((B, Kk, d), dtype=np.float64)
    dv_arr = np.zeros((B, Kk, d), dtype=np.float64)
    cdef double[:, :, ::1] dq = dq_arr
    cdef double[:, :, ::1] dk = dk_arr
    cdef double[:, :, ::1] dv = dv_arr
    cdef double[::1] da = np.zeros(Kk, dtype=np.float64)
    cdef Py_ssize_t b, i, j, c
    cdef double s, dot, a, e
    with nogil:
        for b in range(B):
            for i in range(Kq):
                dot = 0.0
                for j in range(Kk):
                    a = alpha[b, i, j]
                    if a == 0.0:
                        da[j] = 0.0
                        continue
                    s = 0.0
                    for c in range(d):
                        s = s + grad[b, i, c] * v[b, j, c]
                        dv[b, j, c] = dv[b, j, c] + a * grad[b, i, c]
                    da[j] = s
                    dot = dot + s * a
                for j in range(Kk):
                    a = alpha[b, i, j]
                    if a == 0.0:
                        continue
                    e = a * (da[j] - dot)
                    for c in range(d):
                        dq[b, i, c] = dq[b, i, c] + e * k[b, j, c]
                        dk[b, j, c] = dk[b, j, c] + e * q[b, i, c]
    return dq_arr, dk_arr, dv_arr


def index_add_rows(Py_ssize_t n_rows, cnp.int64_t[::1] idx, src):
    width_ = int(np.prod(src.shape[1:], dtype=np.int64))
    src2 = np.ascontiguousarray(src, dtype=np.float64).reshape(src.shape[0], width_)
    cdef double[:, ::1] s = src2
    out_arr = np.zeros((n_rows, s.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, row, width = s.shape[1]
    with nogil:
        for r in range(idx.shape[0]):
            row = idx[r]
            for c in range(width):
                out[row, c] = out[row, c] + s[r, c]
    return out_arr.reshape((n_rows,) + tuple(src.shape[1:]))
