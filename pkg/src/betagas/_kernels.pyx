# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the samplers.

Every function mirrors the one of the same name in ``_pykernels`` and takes
the field and interaction as flat arrays (see ``ExternalField.kernel_params``).
The loops run without the GIL so independent chains can share a thread pool.
"""
from libc.math cimport exp, log, fabs, floor, INFINITY
from libc.stdint cimport int64_t

import numpy as np


cdef inline double _field(double t, const double[::1] poly, double bamp, double bwid,
                          double tx0, double tdx, const double[::1] tv, const double[::1] td) noexcept nogil:
    cdef double s = t * t
    cdef double out = 0.0
    cdef Py_ssize_t k
    for k in range(poly.shape[0] - 1, -1, -1):
        out = out * s + poly[k]
    if bamp != 0.0:
        out += bamp * exp(-bwid * s)
    cdef Py_ssize_t n = tv.shape[0]
    cdef double u, r, r2, r3
    cdef Py_ssize_t i
    if n > 1:
        u = (t - tx0) / tdx
        if u >= 0.0 and u <= n - 1:
            i = <Py_ssize_t>floor(u)
            if i > n - 2:
                i = n - 2
            r = u - i
            r2 = r * r
            r3 = r2 * r
            out += ((2.0 * r3 - 3.0 * r2 + 1.0) * tv[i] + (r3 - 2.0 * r2 + r) * td[i] * tdx
                    + (-2.0 * r3 + 3.0 * r2) * tv[i + 1] + (r3 - r2) * td[i + 1] * tdx)
    return out


cdef inline double _field_deriv(double t, const double[::1] poly, double bamp, double bwid,
                                double tx0, double tdx, const double[::1] tv, const double[::1] td) noexcept nogil:
    cdef double s = t * t
    cdef double out = 0.0
    cdef Py_ssize_t k
    for k in range(poly.shape[0] - 1, 0, -1):
        out = out * s + 2.0 * k * poly[k]
    out *= t
    if bamp != 0.0:
        out -= 2.0 * bamp * bwid * t * exp(-bwid * s)
    cdef Py_ssize_t n = tv.shape[0]
    cdef double u, r, r2
    cdef Py_ssize_t i
    if n > 1:
        u = (t - tx0) / tdx
        if u >= 0.0 and u <= n - 1:
            i = <Py_ssize_t>floor(u)
            if i > n - 2:
                i = n - 2
            r = u - i
            r2 = r * r
            out += ((6.0 * r2 - 6.0 * r) * tv[i] + (3.0 * r2 - 4.0 * r + 1.0) * td[i] * tdx
                    + (-6.0 * r2 + 6.0 * r) * tv[i + 1] + (3.0 * r2 - 2.0 * r) * td[i + 1] * tdx) / tdx
    return out


cdef inline double _pair(double d, const double[::1] ha, const double[::1] hb) noexcept nogil:
    cdef double out = 0.0
    cdef Py_ssize_t k
    for k in range(ha.shape[0]):
        out += ha[k] * exp(-hb[k] * d * d)
    return out


cdef inline double _pair_deriv(double d, const double[::1] ha, const double[::1] hb) noexcept nogil:
    cdef double out = 0.0
    cdef Py_ssize_t k
    for k in range(ha.shape[0]):
        out -= 2.0 * ha[k] * hb[k] * d * exp(-hb[k] * d * d)
    return out


def field_value(double t, const double[::1] poly, double bamp, double bwid,
                double tx0, double tdx, const double[::1] tv, const double[::1] td):
    return _field(t, poly, bamp, bwid, tx0, tdx, tv, td)


def energy(const double[::1] x, double nscale, double beta,
           const double[::1] poly, double bamp, double bwid,
           double tx0, double tdx, const double[::1] tv, const double[::1] td,
           const double[::1] ha, const double[::1] hb):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double e1 = 0.0, elog = 0.0, epair = 0.0, d
    cdef bint hit = False
    with nogil:
        for i in range(n):
            e1 += _field(x[i], poly, bamp, bwid, tx0, tdx, tv, td)
            for j in range(i + 1, n):
                d = x[i] - x[j]
                if d == 0.0:
                    hit = True
                    break
                elog += log(fabs(d))
                if ha.shape[0] > 0:
                    epair += _pair(d, ha, hb)
            if hit:
                break
    if hit:
        return INFINITY
    return nscale * e1 - beta * elog + epair


def gradient(const double[::1] x, double nscale, double beta,
             const double[::1] poly, double bamp, double bwid,
             double tx0, double tdx, const double[::1] tv, const double[::1] td,
             const double[::1] ha, const double[::1] hb):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] g = out
    cdef Py_ssize_t i, j
    cdef double d, acc, rep
    cdef bint bad = False
    with nogil:
        for i in range(n):
            acc = nscale * _field_deriv(x[i], poly, bamp, bwid, tx0, tdx, tv, td)
            rep = 0.0
            for j in range(n):
                if j == i:
                    continue
                d = x[i] - x[j]
                if d == 0.0:
                    bad = True
                    break
                rep += 1.0 / d
                if ha.shape[0] > 0:
                    acc += _pair_deriv(d, ha, hb)
            g[i] = acc - beta * rep
            if bad:
                break
    if bad:
        raise ValueError("gradient undefined at coincident particles")
    return out


def metropolis_block(double[::1] x, double nscale, double beta,
                     const double[::1] poly, double bamp, double bwid,
                     double tx0, double tdx, const double[::1] tv, const double[::1] td,
                     const double[::1] ha, const double[::1] hb,
                     const int64_t[::1] sites, const double[::1] increments, const double[::1] log_u):
    """Single-site random-walk Metropolis moves; updates ``x`` in place.

    Returns the number of accepted moves.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = sites.shape[0]
    cdef Py_ssize_t s, j, l, cnt
    cdef double y0, y1, d0, d1, prod, logsum, pair, dE
    cdef long accepted = 0
    cdef bint hit
    cdef bint has_pair = ha.shape[0] > 0
    with nogil:
        for s in range(m):
            l = sites[s]
            y0 = x[l]
            y1 = y0 + increments[s]
            prod = 1.0
            logsum = 0.0
            pair = 0.0
            cnt = 0
            hit = False
            for j in range(n):
                if j == l:
                    continue
                d1 = y1 - x[j]
                if d1 == 0.0:
                    hit = True
                    break
                d0 = y0 - x[j]
                prod *= fabs(d1 / d0)
                cnt += 1
                if cnt == 8:
                    logsum += log(prod)
                    prod = 1.0
                    cnt = 0
                if has_pair:
                    pair += _pair(d1, ha, hb) - _pair(d0, ha, hb)
            if hit:
                continue
            logsum += log(prod)
            dE = (nscale * (_field(y1, poly, bamp, bwid, tx0, tdx, tv, td)
                            - _field(y0, poly, bamp, bwid, tx0, tdx, tv, td))
                  - beta * logsum + pair)
            if log_u[s] < -dE:
                x[l] = y1
                accepted += 1
    return accepted
