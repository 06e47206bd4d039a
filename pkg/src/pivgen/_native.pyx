# cython: language_level=3
"""Compiled splatting kernel: per-particle Gaussian patches accumulated into
a row band of the image.

Contract shared with pivgen._fallback.splat_accumulate: every pixel receives
its contributions in particle-index order, making the result independent of
band layout and thread count. Runs without the GIL so band calls parallelize
across Python threads.
"""

from libc.math cimport exp, floor


def splat_accumulate(const double[:, ::1] pos, const float[::1] i0,
                     const float[::1] sigma_x, const float[::1] sigma_y,
                     const float[::1] rho, const unsigned char[::1] mask,
                     int side, float[:, ::1] out, int row_start, int row_stop):
    cdef Py_ssize_t n = pos.shape[0]
    cdef int width = <int> out.shape[1]
    cdef int half = side // 2
    cdef Py_ssize_t p
    cdef int ax, ay, r0, r1, c0, c1, r, c
    cdef double x0, y0, q, a, b, cc, dx, dy, amp, sx, sy, rr

    with nogil:
        for p in range(n):
            if mask[p] == 0:
                continue
            x0 = pos[p, 0]
            y0 = pos[p, 1]
            ax = <int> floor(x0 + 0.5)
            ay = <int> floor(y0 + 0.5)

            r0 = ay - half
            if r0 < row_start:
                r0 = row_start
            r1 = ay + half
            if r1 >= row_stop:
                r1 = row_stop - 1
            if r0 > r1:
                continue
            c0 = ax - half
            if c0 < 0:
                c0 = 0
            c1 = ax + half
            if c1 >= width:
                c1 = width - 1
            if c0 > c1:
                continue

            sx = sigma_x[p]
            sy = sigma_y[p]
            rr = rho[p]
            q = 1.0 - rr * rr
            a = 1.0 / (2.0 * q * sx * sx)
            b = rr / (q * sx * sy)
            cc = 1.0 / (2.0 * q * sy * sy)
            amp = i0[p]

            for r in range(r0, r1 + 1):
                dy = r - y0
                for c in range(c0, c1 + 1):
                    dx = c - x0
                    out[r, c] += <float> (amp * exp(-(a * dx * dx
                                                      - b * dx * dy
                                                      + cc * dy * dy)))
