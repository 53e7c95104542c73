# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte-Carlo round kernels; see ``_pykernels`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, exp, sqrt

cnp.import_array()


cdef inline void _amp(int cls, int bit, const double[:] mu, const signed char[:] is_x,
                      double* early, double* late) noexcept nogil:
    cdef double m = mu[cls]
    cdef double half
    if is_x[cls]:
        half = sqrt(m * 0.5)
        early[0] = half
        late[0] = (1.0 - 2.0 * bit) * half
    elif bit == 0:
        early[0] = sqrt(m)
        late[0] = 0.0
    else:
        early[0] = 0.0
        late[0] = sqrt(m)


def tally_rounds(const signed char[:] cls_l, const signed char[:] cls_r,
                 const signed char[:] bit_l, const signed char[:] bit_r,
                 const double[:] phase, const double[:, ::1] u,
                 const double[:] mu, const signed char[:] is_x,
                 double t_left, double t_right, double kappa, double dark):
    cdef Py_ssize_t n = phase.shape[0]
    cdef Py_ssize_t i
    cdef int idx
    cdef double le, ll, re, rl, ae, al, be, bl, c
    cdef double base_e, base_l, cross_e, cross_l
    cdef double sl = sqrt(t_left)
    cdef double sr = sqrt(t_right)
    cdef double keep = 1.0 - dark
    cdef bint d1e, d1l, d2e, d2l, psi
    sent_a = np.zeros(16, dtype=np.int64)
    success_a = np.zeros(16, dtype=np.int64)
    error_a = np.zeros(16, dtype=np.int64)
    cdef long long[:] sent = sent_a
    cdef long long[:] success = success_a
    cdef long long[:] error = error_a
    with nogil:
        for i in range(n):
            _amp(cls_l[i], bit_l[i], mu, is_x, &le, &ll)
            _amp(cls_r[i], bit_r[i], mu, is_x, &re, &rl)
            c = cos(phase[i])
            ae = sl * le
            al = sl * ll
            be = sr * re
            bl = sr * rl
            base_e = 0.5 * (ae * ae + be * be)
            base_l = 0.5 * (al * al + bl * bl)
            cross_e = kappa * ae * be * c
            cross_l = kappa * al * bl * c
            d1e = u[i, 0] < 1.0 - keep * exp(-(base_e + cross_e))
            d1l = u[i, 1] < 1.0 - keep * exp(-(base_l + cross_l))
            d2e = u[i, 2] < 1.0 - keep * exp(-(base_e - cross_e))
            d2l = u[i, 3] < 1.0 - keep * exp(-(base_l - cross_l))
            idx = 4 * cls_l[i] + cls_r[i]
            sent[idx] += 1
            psi = (d1e and d2l and not d1l and not d2e) or (d1l and d2e and not d1e and not d2l)
            if psi:
                success[idx] += 1
                if bit_l[i] == bit_r[i]:
                    error[idx] += 1
    return sent_a, success_a, error_a


def hom_rounds(const double[:] phase, const double[:, ::1] u,
               double a, double b, double kappa, double dark):
    cdef Py_ssize_t n = phase.shape[0]
    cdef Py_ssize_t i
    cdef long long count = 0
    cdef double base = 0.5 * (a * a + b * b)
    cdef double keep = 1.0 - dark
    cdef double cross
    with nogil:
        for i in range(n):
            cross = kappa * a * b * cos(phase[i])
            if u[i, 0] < 1.0 - keep * exp(-(base + cross)) and \
                    u[i, 1] < 1.0 - keep * exp(-(base - cross)):
                count += 1
    return int(count)


def count_joint(const unsigned char[:] s1, const unsigned char[:] s2):
    cdef Py_ssize_t n = s1.shape[0]
    cdef Py_ssize_t i
    cdef long long count = 0
    with nogil:
        for i in range(n):
            if s1[i] and s2[i]:
                count += 1
    return int(count)
