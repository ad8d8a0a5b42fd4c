"""Pure-numpy reference implementation of the simulation kernels.

Mirrors ``_native.pyx`` operation for operation; selected automatically when
the compiled extension is unavailable or when CROSSROADS_PURE_PYTHON=1.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def advance(s, v, cmd, length, dt, accel, decel):
    """Rate-limited speed update plus trapezoidal position integration.

    Returns (s_new, v_new, done) without mutating the inputs.
    """
    dv = np.clip(cmd - v, -decel * dt, accel * dt)
    v_new = v + dv
    s_new = np.minimum(s + 0.5 * (v + v_new) * dt, length)
    done = s_new >= length
    return s_new, v_new, done


def poses(route_idx, s, cum_s, px, py, tx, ty, offsets):
    """Interpolate (x, y, heading) along each vehicle's route polyline.

    The 12 route tables are concatenated; ``offsets[r]`` is the first point
    index of route r and ``offsets[r + 1] - 1`` its last.
    """
    n = len(route_idx)
    out = np.empty((4, n), dtype=np.float64)
    for i in range(n):
        base = offsets[route_idx[i]]
        top = offsets[route_idx[i] + 1]
        j = base + np.searchsorted(cum_s[base:top], s[i], side="right") - 1
        j = min(max(j, base), top - 2)
        frac = s[i] - cum_s[j]
        out[0, i] = px[j] + tx[j] * frac
        out[1, i] = py[j] + ty[j] * frac
        out[2, i] = tx[j]
        out[3, i] = ty[j]
    return out[0], out[1], out[2], out[3]


def collisions(x, y, tx, ty, half_len, half_wid):
    """Indices (i, j), i < j, of overlapping oriented vehicle rectangles.

    Separating-axis test on the 4 face normals of each rectangle pair, with a
    bounding-circle prefilter.
    """
    n = len(x)
    out_i, out_j = [], []
    diag = np.hypot(half_len, half_wid)
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[j] - x[i]
            dy = y[j] - y[i]
            if dx * dx + dy * dy > (diag[i] + diag[j]) ** 2:
                continue
            if _obb_overlap(
                dx, dy,
                tx[i], ty[i], half_len[i], half_wid[i],
                tx[j], ty[j], half_len[j], half_wid[j],
            ):
                out_i.append(i)
                out_j.append(j)
    return np.asarray(out_i, dtype=np.intp), np.asarray(out_j, dtype=np.intp)


def _obb_overlap(dx, dy, uxa, uya, la, wa, uxb, uyb, lb, wb):
    # Axes: u_a, v_a, u_b, v_b where v = u rotated 90 degrees.
    for ax, ay in ((uxa, uya), (-uya, uxa), (uxb, uyb), (-uyb, uxb)):
        center_dist = abs(dx * ax + dy * ay)
        ra = la * abs(uxa * ax + uya * ay) + wa * abs(-uya * ax + uxa * ay)
        rb = lb * abs(uxb * ax + uyb * ay) + wb * abs(-uyb * ax + uxb * ay)
        if center_dist > ra + rb:
            return False
    return True
