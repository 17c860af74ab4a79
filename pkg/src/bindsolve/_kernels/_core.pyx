# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mat-vecs go through BLAS (dgemv on the transposed Fortran view of the
C-contiguous center matrix); the surrounding softmax/weighting loops are
fused in C. Same contracts as _numpy.py; selected by bindsolve._kernels.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef void _tmatvec(const double* A, int D, int n, const double* x,
                   double* out) noexcept nogil:
    # out = A^T x for C-order A (D rows, n cols): Fortran view is (n, D)
    cdef int m = n, k = D, inc = 1
    cdef double one = 1.0, zero = 0.0
    dgemv("N", &m, &k, &one, A, &m, x, &inc, &zero, out, &inc)


cdef void _matvec(const double* A, int D, int n, const double* w,
                  double* out) noexcept nogil:
    # out = A w for C-order A: transposed op on the Fortran view
    cdef int m = n, k = D, inc = 1
    cdef double one = 1.0, zero = 0.0
    dgemv("T", &m, &k, &one, A, &m, w, &inc, &zero, out, &inc)


cdef double _softmax_inplace(double* v, int n) noexcept nogil:
    # v := softmax(v); returns logsumexp(v_before)
    cdef double m = v[0], z = 0.0
    cdef int i
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    for i in range(n):
        v[i] = exp(v[i] - m)
        z += v[i]
    for i in range(n):
        v[i] /= z
    return m + log(z)


def mixture_softmax(cnp.ndarray[cnp.float64_t, ndim=2] centers,
                    cnp.ndarray[cnp.float64_t, ndim=1] state,
                    double logit_scale,
                    cnp.ndarray[cnp.float64_t, ndim=1] offsets):
    cdef Py_ssize_t D = centers.shape[0]
    cdef Py_ssize_t n = centers.shape[1]
    if not centers.flags.c_contiguous:
        centers = np.ascontiguousarray(centers)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mu = np.empty(D)
    cdef const double[:, ::1] C = centers
    cdef const double[::1] x = state
    cdef const double[::1] off = offsets
    cdef double[::1] wv = w
    cdef double[::1] mv = mu
    cdef double lse
    cdef Py_ssize_t i

    with nogil:
        _tmatvec(&C[0, 0], <int> D, <int> n, &x[0], &wv[0])
        for i in range(n):
            wv[i] = logit_scale * wv[i] + off[i]
        lse = _softmax_inplace(&wv[0], <int> n)
        _matvec(&C[0, 0], <int> D, <int> n, &wv[0], &mv[0])
    return w, mu, lse


def mixture_softmax_identity(cnp.ndarray[cnp.float64_t, ndim=1] state,
                             double logit_scale,
                             cnp.ndarray[cnp.float64_t, ndim=1] offsets):
    cdef Py_ssize_t n = state.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(n)
    cdef const double[::1] x = state
    cdef const double[::1] off = offsets
    cdef double[::1] wv = w
    cdef double lse
    cdef Py_ssize_t i

    with nogil:
        for i in range(n):
            wv[i] = logit_scale * x[i] + off[i]
        lse = _softmax_inplace(&wv[0], <int> n)
    return w, w.copy(), lse


def softmax_jacobian_apply(cnp.ndarray[cnp.float64_t, ndim=2] centers,
                           cnp.ndarray[cnp.float64_t, ndim=1] weights,
                           cnp.ndarray[cnp.float64_t, ndim=1] vec,
                           double coef_mix, double coef_id):
    cdef Py_ssize_t D = centers.shape[0]
    cdef Py_ssize_t n = centers.shape[1]
    if not centers.flags.c_contiguous:
        centers = np.ascontiguousarray(centers)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.empty(n)
    cdef const double[:, ::1] C = centers
    cdef const double[::1] w = weights
    cdef const double[::1] v = vec
    cdef double[::1] tv = t
    cdef double[::1] ov = out
    cdef double wu
    cdef Py_ssize_t i, j

    with nogil:
        _tmatvec(&C[0, 0], <int> D, <int> n, &v[0], &tv[0])
        wu = 0.0
        for i in range(n):
            wu += w[i] * tv[i]
        for i in range(n):
            tv[i] = w[i] * tv[i] - w[i] * wu
        _matvec(&C[0, 0], <int> D, <int> n, &tv[0], &ov[0])
        for j in range(D):
            ov[j] = coef_mix * ov[j] + coef_id * v[j]
    return out


def softmax_jacobian_apply_identity(cnp.ndarray[cnp.float64_t, ndim=1] weights,
                                    cnp.ndarray[cnp.float64_t, ndim=1] vec,
                                    double coef_mix, double coef_id):
    cdef Py_ssize_t n = weights.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef const double[::1] w = weights
    cdef const double[::1] v = vec
    cdef double[::1] ov = out
    cdef double wu = 0.0
    cdef Py_ssize_t i

    with nogil:
        for i in range(n):
            wu += w[i] * v[i]
        for i in range(n):
            ov[i] = coef_mix * (w[i] * v[i] - w[i] * wu) + coef_id * v[i]
    return out


def autoassoc_sign(cnp.ndarray[cnp.float64_t, ndim=2] codebook,
                   cnp.ndarray[cnp.float64_t, ndim=1] vec):
    cdef Py_ssize_t D = codebook.shape[0]
    cdef Py_ssize_t n = codebook.shape[1]
    if not codebook.flags.c_contiguous:
        codebook = np.ascontiguousarray(codebook)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n)
    cdef const double[:, ::1] C = codebook
    cdef const double[::1] v = vec
    cdef double[::1] uv = u
    cdef double[::1] ov = out
    cdef Py_ssize_t j

    with nogil:
        _tmatvec(&C[0, 0], <int> D, <int> n, &v[0], &uv[0])
        _matvec(&C[0, 0], <int> D, <int> n, &uv[0], &ov[0])
        for j in range(D):
            ov[j] = 1.0 if ov[j] >= 0.0 else -1.0
    return out
