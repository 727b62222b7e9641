# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: direct far-zone Biot-Savart sum and cubic interpolation."""

from libc.math cimport exp, log, sqrt, floor


cdef inline double _far_weight(double r2, double rho) noexcept nogil:
    # 1 - psi(r/rho), psi = 1 on [0, 1/2], 0 past 1, C-infinity blend in between
    cdef double s, t, a, b
    if r2 >= rho * rho:
        return 1.0
    s = sqrt(r2) / rho
    if s <= 0.5:
        return 0.0
    t = 2.0 * s - 1.0
    a = exp(-1.0 / t)
    b = exp(-1.0 / (1.0 - t))
    return a / (a + b)


def far_sum(const double[::1] tx1, const double[::1] tx2,
            const double[::1] sy1, const double[::1] sy2, const double[::1] sq,
            double alpha, double rho,
            double[::1] out1, double[::1] out2):
    """Accumulate the smoothed reflected kernel over weighted sources.

    Sources are visited in index order for every target, so the result
    does not depend on how targets are batched.
    """
    cdef Py_ssize_t nt = tx1.shape[0], ns = sy1.shape[0]
    cdef Py_ssize_t i, k
    cdef double p = 1.0 + 0.5 * alpha
    cdef double x1, x2, d1, d2, e1, r2, re2, k0, k1, a1, a2, q
    with nogil:
        for i in range(nt):
            x1 = tx1[i]
            x2 = tx2[i]
            a1 = 0.0
            a2 = 0.0
            for k in range(ns):
                q = sq[k]
                d1 = x1 - sy1[k]
                e1 = x1 + sy1[k]
                d2 = x2 - sy2[k]
                r2 = d1 * d1 + d2 * d2
                re2 = e1 * e1 + d2 * d2
                if r2 > 0.0:
                    k0 = _far_weight(r2, rho) * exp(-p * log(r2))
                else:
                    k0 = 0.0
                if re2 > 0.0:
                    k1 = _far_weight(re2, rho) * exp(-p * log(re2))
                else:
                    k1 = 0.0
                a1 = a1 - q * d2 * (k0 - k1)
                a2 = a2 + q * (d1 * k0 - e1 * k1)
            out1[i] = a1
            out2[i] = a2


cdef inline void _lagrange4(double u, double* w) noexcept nogil:
    w[0] = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0
    w[1] = u * (u - 2.0) * (u - 3.0) / 2.0
    w[2] = -u * (u - 1.0) * (u - 3.0) / 2.0
    w[3] = u * (u - 1.0) * (u - 2.0) / 6.0


cdef inline Py_ssize_t _start(double p, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t s = <Py_ssize_t>floor(p) - 1
    if s < 0:
        s = 0
    if s > n - 4:
        s = n - 4
    return s


def interp_cubic(const double[:, ::1] values, const double[::1] p1,
                 const double[::1] p2, double[::1] out, bint zero_outside):
    """Tensor cubic Lagrange interpolation at fractional index coordinates.

    Stencils are shifted inward at the grid edges, so cubics are
    reproduced everywhere and node values are returned exactly.
    """
    cdef Py_ssize_t n1 = values.shape[0], n2 = values.shape[1]
    cdef Py_ssize_t m = p1.shape[0], i, a, b, s1, s2
    cdef double w1[4]
    cdef double w2[4]
    cdef double acc, row, u, v, ws, tot
    with nogil:
        for i in range(m):
            u = p1[i]
            v = p2[i]
            if zero_outside and (u < 0.0 or u > n1 - 1 or v < 0.0 or v > n2 - 1):
                out[i] = 0.0
                continue
            s1 = _start(u, n1)
            s2 = _start(v, n2)
            _lagrange4(u - s1, w1)
            _lagrange4(v - s2, w2)
            ws = w2[0] + w2[1] + w2[2] + w2[3]
            acc = 0.0
            tot = 0.0
            for a in range(4):
                row = 0.0
                for b in range(4):
                    row = row + w2[b] * values[s1 + a, s2 + b]
                acc = acc + w1[a] * row
                tot = tot + w1[a] * ws
            # dividing by the weight sum makes the value 1 reproduce exactly
            out[i] = acc / tot


cdef inline void _lagrange_n(double u, int n, double* w) noexcept nogil:
    cdef int m, k
    cdef double num, den
    for m in range(n):
        num = 1.0
        den = 1.0
        for k in range(n):
            if k != m:
                num = num * (u - k)
                den = den * (m - k)
        w[m] = num / den


cdef inline Py_ssize_t _start_n(double p, Py_ssize_t n, int npts) noexcept nogil:
    cdef Py_ssize_t s = <Py_ssize_t>floor(p) - (npts // 2 - 1)
    if s < 0:
        s = 0
    if s > n - npts:
        s = n - npts
    return s


def interp_lagrange(const double[:, ::1] values, const double[::1] p1,
                    const double[::1] p2, double[::1] out, bint zero_outside, int npts):
    """Tensor Lagrange interpolation with an even number of points (4 or 6)."""
    cdef Py_ssize_t n1 = values.shape[0], n2 = values.shape[1]
    cdef Py_ssize_t m = p1.shape[0], i, a, b, s1, s2
    cdef double w1[8]
    cdef double w2[8]
    cdef double acc, row, u, v, ws, tot
    if npts < 2 or npts > 8 or npts % 2:
        raise ValueError("npts must be even and <= 8")
    with nogil:
        for i in range(m):
            u = p1[i]
            v = p2[i]
            if zero_outside and (u < 0.0 or u > n1 - 1 or v < 0.0 or v > n2 - 1):
                out[i] = 0.0
                continue
            s1 = _start_n(u, n1, npts)
            s2 = _start_n(v, n2, npts)
            _lagrange_n(u - s1, npts, w1)
            _lagrange_n(v - s2, npts, w2)
            ws = 0.0
            for b in range(npts):
                ws = ws + w2[b]
            acc = 0.0
            tot = 0.0
            for a in range(npts):
                row = 0.0
                for b in range(npts):
                    row = row + w2[b] * values[s1 + a, s2 + b]
                acc = acc + w1[a] * row
                tot = tot + w1[a] * ws
            out[i] = acc / tot
