# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused Laplace-noise column accumulators.

Draws uniforms straight from a numpy ``BitGenerator`` in row-major order, maps
them to Laplace(1) by inverse CDF and accumulates per-column sums (and sums of
squares) of ``hit + sigma * W - center`` without materialising the matrix.
"""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport copysign, fmin, log
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t

# log(2**-53): stand-in for log(0) when the uniform stream returns exactly 0
cdef double LOG_TINY = -36.7368005696771


cdef inline double _laplace(bitgen_t *bg) noexcept nogil:
    # branch-free: the sign is a coin flip, so a branch would mispredict half the time.
    # 1 - u is exact for u >= 1/2, hence t equals 2u or 2 - 2u exactly.
    cdef double u = bg.next_double(bg.state)
    cdef double t = 2.0 * fmin(u, 1.0 - u)
    if t == 0.0:
        return LOG_TINY
    return copysign(log(t), u - 0.5)


def column_moments(rng, const int64_t[::1] bins, const double[::1] hits, double sigma,
                   const double[::1] center, bint squares):
    cdef Py_ssize_t n = bins.shape[0]
    cdef Py_ssize_t N = center.shape[0]
    cdef Py_ssize_t i, j
    cdef int64_t b
    cdef double z
    bitgen = rng.bit_generator
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
    sums_arr = np.zeros(N)
    sq_arr = np.zeros(N)
    cdef double[::1] sums = sums_arr
    cdef double[::1] sq = sq_arr
    cdef double[::1] row = np.empty(N)
    with bitgen.lock, nogil:
        for i in range(n):
            for j in range(N):
                row[j] = sigma * _laplace(bg) - center[j]
            b = bins[i]
            if b >= 0:
                row[b] += hits[i]
            if squares:
                for j in range(N):
                    sums[j] += row[j]
                    sq[j] += row[j] * row[j]
            else:
                for j in range(N):
                    sums[j] += row[j]
    return sums_arr, sq_arr


def laplace_fill(rng, Py_ssize_t size):
    """``size`` Laplace(1) variates from the same transform (for cross-checks)."""
    bitgen = rng.bit_generator
    capsule = bitgen.capsule
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
    out_arr = np.empty(size)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with bitgen.lock, nogil:
        for i in range(size):
            out[i] = _laplace(bg)
    return out_arr
