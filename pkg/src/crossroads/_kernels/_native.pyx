# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels; see fallback.py for the reference semantics."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "native"


def advance(double[::1] s, double[::1] v, double[::1] cmd, double[::1] length,
            double dt, double accel, double decel):
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[double, ndim=1] s_new = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] v_new = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] done = np.empty(n, dtype=np.bool_)
    cdef double[::1] sn = s_new
    cdef double[::1] vn = v_new
    cdef cnp.uint8_t[::1] dn = done
    cdef Py_ssize_t i
    cdef double dv, lo, hi, si
    lo = -decel * dt
    hi = accel * dt
    for i in range(n):
        dv = cmd[i] - v[i]
        if dv < lo:
            dv = lo
        elif dv > hi:
            dv = hi
        vn[i] = v[i] + dv
        si = s[i] + 0.5 * (v[i] + vn[i]) * dt
        if si > length[i]:
            si = length[i]
        sn[i] = si
        dn[i] = si >= length[i]
    return s_new, v_new, done


def poses(int[::1] route_idx, double[::1] s,
          double[::1] cum_s, double[::1] px, double[::1] py,
          double[::1] tx, double[::1] ty, long[::1] offsets):
    cdef Py_ssize_t n = route_idx.shape[0]
    cdef cnp.ndarray[double, ndim=1] ox = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] oy = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] otx = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] oty = np.empty(n, dtype=np.float64)
    cdef double[::1] vx = ox
    cdef double[::1] vy = oy
    cdef double[::1] vtx = otx
    cdef double[::1] vty = oty
    cdef Py_ssize_t i, lo, hi, mid, base, top, j
    cdef double frac
    for i in range(n):
        base = offsets[route_idx[i]]
        top = offsets[route_idx[i] + 1]
        # rightmost j with cum_s[j] <= s[i]
        lo = base
        hi = top
        while lo < hi:
            mid = (lo + hi) // 2
            if cum_s[mid] <= s[i]:
                lo = mid + 1
            else:
                hi = mid
        j = lo - 1
        if j < base:
            j = base
        elif j > top - 2:
            j = top - 2
        frac = s[i] - cum_s[j]
        vx[i] = px[j] + tx[j] * frac
        vy[i] = py[j] + ty[j] * frac
        vtx[i] = tx[j]
        vty[i] = ty[j]
    return ox, oy, otx, oty


cdef inline bint _obb_overlap(double dx, double dy,
                              double uxa, double uya, double la, double wa,
                              double uxb, double uyb, double lb, double wb) nogil:
    cdef double ax, ay, center_dist, ra, rb
    cdef int k
    for k in range(4):
        if k == 0:
            ax = uxa; ay = uya
        elif k == 1:
            ax = -uya; ay = uxa
        elif k == 2:
            ax = uxb; ay = uyb
        else:
            ax = -uyb; ay = uxb
        center_dist = dx * ax + dy * ay
        if center_dist < 0:
            center_dist = -center_dist
        ra = la * abs(uxa * ax + uya * ay) + wa * abs(-uya * ax + uxa * ay)
        rb = lb * abs(uxb * ax + uyb * ay) + wb * abs(-uyb * ax + uxb * ay)
        if center_dist > ra + rb:
            return False
    return True


def collisions(double[::1] x, double[::1] y, double[::1] tx, double[::1] ty,
               double[::1] half_len, double[::1] half_wid):
    cdef Py_ssize_t n = x.shape[0]
    cdef list out_i = []
    cdef list out_j = []
    cdef Py_ssize_t i, j
    cdef double dx, dy, r
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[j] - x[i]
            dy = y[j] - y[i]
            r = ((half_len[i] * half_len[i] + half_wid[i] * half_wid[i]) ** 0.5
                 + (half_len[j] * half_len[j] + half_wid[j] * half_wid[j]) ** 0.5)
            if dx * dx + dy * dy > r * r:
                continue
            if _obb_overlap(dx, dy, tx[i], ty[i], half_len[i], half_wid[i],
                            tx[j], ty[j], half_len[j], half_wid[j]):
                out_i.append(i)
                out_j.append(j)
    return np.asarray(out_i, dtype=np.intp), np.asarray(out_j, dtype=np.intp)
