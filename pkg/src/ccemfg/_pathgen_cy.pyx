# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython path-generation backend.

Mirrors :mod:`ccemfg._pathgen_py` (splitmix64 counter draws, PPND16 inverse
normal CDF, Brownian-bridge fill) with tight C loops.  The bisection
schedule is computed once in Python and passed in, so both backends share
the exact same draw layout.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t ccemfg_mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    unsigned long long ccemfg_mix64(unsigned long long z) nogil

cdef unsigned long long GOLDEN = 0x9E3779B97F4A7C15ULL

cdef inline double _uniform(unsigned long long key, unsigned long long idx) nogil:
    cdef unsigned long long bits = ccemfg_mix64(key + GOLDEN * (idx + 1ULL)) >> 11
    return (<double> bits + 0.5) * (1.0 / 9007199254740992.0)

cdef inline double _ppnd16(double p) nogil:
    cdef double q = p - 0.5
    cdef double r, num, den
    if q <= 0.425 and q >= -0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
              + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
              + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
              + 1.3314166789178437745e2) * r + 3.3871328727963666080)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
              + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
              + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
              + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = sqrt(-log(p))
    else:
        r = sqrt(-log(1.0 - p))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
              + 2.41780725177450611770e-1) * r + 1.27045825245236838258) * r
              + 3.64784832476320460504) * r + 5.76949722146069140550) * r
              + 4.63033784615654529590) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
              + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
              + 6.89767334985100004550e-1) * r + 1.67638483018380384940) * r
              + 2.05319162663775882187) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
              + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
              + 2.96560571828504891230e-1) * r + 1.78482653991729133580) * r
              + 5.46378491116411436990) * r + 6.65790464350110377720)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
              + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
              + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
              + 5.99832206555887937690e-1) * r + 1.0)
    if q < 0.0:
        return -num / den
    return num / den


def norm_quantile(p):
    """Inverse standard normal CDF, elementwise."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = \
        np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _ppnd16(flat[i])
    return out.reshape(np.shape(p))


def brownian_paths_plan(cnp.ndarray[cnp.uint64_t, ndim=1] keys,
                        Py_ssize_t steps, double horizon,
                        cnp.ndarray[cnp.int64_t, ndim=1] lo,
                        cnp.ndarray[cnp.int64_t, ndim=1] mid,
                        cnp.ndarray[cnp.int64_t, ndim=1] hi,
                        cnp.ndarray[cnp.float64_t, ndim=1] frac,
                        cnp.ndarray[cnp.float64_t, ndim=1] sd):
    """Fill Brownian paths (one row per key) following the given plan."""
    cdef Py_ssize_t n_keys = keys.shape[0]
    cdef Py_ssize_t n_nodes = lo.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = \
        np.zeros((n_keys, steps + 1), dtype=np.float64)
    cdef double sqrt_t = sqrt(horizon)
    cdef Py_ssize_t s, n
    cdef unsigned long long key
    cdef double w_lo, z
    with nogil:
        for s in range(n_keys):
            key = keys[s]
            w[s, steps] = sqrt_t * _ppnd16(_uniform(key, 0))
            for n in range(n_nodes):
                z = _ppnd16(_uniform(key, <unsigned long long> (n + 1)))
                w_lo = w[s, lo[n]]
                w[s, mid[n]] = w_lo + frac[n] * (w[s, hi[n]] - w_lo) + sd[n] * z
    return w
