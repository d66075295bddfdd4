# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for the decision-directed tracker.

Mirrors ``pll._track_python`` exactly; the per-symbol feedback recursion is
the hot path of a Monte-Carlo sweep and cannot be vectorized.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


def track(cnp.complex128_t[::1] x,
          cnp.complex128_t[::1] points,
          double kp, double ki,
          double acq_kp, double acq_ki,
          double thresh, double alpha, Py_ssize_t min_acquire,
          double phase0, double v0):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = points.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] corrected = np.empty(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] phase_log = np.empty(n, dtype=np.float64)
    cdef double phase = phase0
    cdef double v = v0
    cdef double ema = 0.5
    cdef Py_ssize_t locked = -1
    cdef double gp = acq_kp
    cdef double gi = acq_ki
    cdef double cr, ci, pr, pi, dr, di, dist, bestd, br, bi, dd, e, co, si
    cdef Py_ssize_t i, j

    for i in range(n):
        co = cos(phase)
        si = sin(phase)
        # c = x[i] * exp(-1j * phase)
        cr = x[i].real * co + x[i].imag * si
        ci = x[i].imag * co - x[i].real * si
        # nearest constellation point (strict argmin; points ordered by angle)
        br = points[0].real
        bi = points[0].imag
        dr = cr - br
        di = ci - bi
        bestd = dr * dr + di * di
        for j in range(1, m):
            pr = points[j].real
            pi = points[j].imag
            dr = cr - pr
            di = ci - pi
            dist = dr * dr + di * di
            if dist < bestd:
                bestd = dist
                br = pr
                bi = pi
        dd = br * br + bi * bi
        # e = Im(c * conj(d)) / |d|^2
        e = (ci * br - cr * bi) / dd if dd > 0.0 else 0.0
        corrected[i].real = cr
        corrected[i].imag = ci
        phase_log[i] = phase
        v += gi * e
        phase += gp * e + v
        ema = (1.0 - alpha) * ema + alpha * fabs(e)
        if locked < 0 and i + 1 >= min_acquire and ema < thresh:
            locked = i
            gp = kp
            gi = ki
    return corrected, phase_log, v, locked
