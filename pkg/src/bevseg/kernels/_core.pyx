# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels: bilinear gather and weighted multi-point
aggregation, forward and backward.  Semantics are identical to
``numpy_ref``; see that module for the coordinate and border conventions.
"""

import numpy as np

from libc.math cimport floor

BACKEND = "cython"

ctypedef fused real:
    float
    double


cdef inline bint _usable(double v) noexcept nogil:
    # rejects NaN/inf and values that would overflow the index cast
    return v > -1e9 and v < 1e9


def gather_bilinear(real[:, :, ::1] feat, real[:, ::1] xy):
    cdef Py_ssize_t C = feat.shape[0], H = feat.shape[1], W = feat.shape[2]
    cdef Py_ssize_t P = xy.shape[0]
    out_np = np.zeros((P, C), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t p, c, ix0, iy0, dx, dy, ix, iy
    cdef double x, y, fx, fy, wx, wy, wgt
    with nogil:
        for p in range(P):
            x = xy[p, 0]
            y = xy[p, 1]
            if not (_usable(x) and _usable(y)):
                continue
            ix0 = <Py_ssize_t>floor(x)
            iy0 = <Py_ssize_t>floor(y)
            fx = x - floor(x)
            fy = y - floor(y)
            for dy in range(2):
                iy = iy0 + dy
                if iy < 0 or iy >= H:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    ix = ix0 + dx
                    if ix < 0 or ix >= W:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    wgt = wx * wy
                    for c in range(C):
                        out[p, c] += <real>(wgt * feat[c, iy, ix])
    return out_np


def gather_bilinear_backward(real[:, :, ::1] feat, real[:, ::1] xy,
                             real[:, ::1] grad_out):
    cdef Py_ssize_t C = feat.shape[0], H = feat.shape[1], W = feat.shape[2]
    cdef Py_ssize_t P = xy.shape[0]
    dt = np.float32 if real is float else np.float64
    gfeat_np = np.zeros((C, H, W), dtype=dt)
    gxy_np = np.zeros((P, 2), dtype=dt)
    cdef real[:, :, ::1] gfeat = gfeat_np
    cdef real[:, ::1] gxy = gxy_np
    cdef Py_ssize_t p, c, ix0, iy0, dx, dy, ix, iy
    cdef double x, y, fx, fy, wx, wy, sx, sy, dot, gx, gy
    with nogil:
        for p in range(P):
            x = xy[p, 0]
            y = xy[p, 1]
            if not (_usable(x) and _usable(y)):
                continue
            ix0 = <Py_ssize_t>floor(x)
            iy0 = <Py_ssize_t>floor(y)
            fx = x - floor(x)
            fy = y - floor(y)
            gx = 0.0
            gy = 0.0
            for dy in range(2):
                iy = iy0 + dy
                if iy < 0 or iy >= H:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                sy = 1.0 if dy == 1 else -1.0
                for dx in range(2):
                    ix = ix0 + dx
                    if ix < 0 or ix >= W:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    sx = 1.0 if dx == 1 else -1.0
                    dot = 0.0
                    for c in range(C):
                        dot += grad_out[p, c] * feat[c, iy, ix]
                        gfeat[c, iy, ix] += <real>(wx * wy * grad_out[p, c])
                    gx += sx * wy * dot
                    gy += sy * wx * dot
            gxy[p, 0] = <real>gx
            gxy[p, 1] = <real>gy
    return gfeat_np, gxy_np


def deform_agg(real[:, :, :, ::1] value, real[:, :, :, ::1] loc,
               real[:, :, ::1] weight):
    cdef Py_ssize_t M = value.shape[0], Cv = value.shape[1]
    cdef Py_ssize_t H = value.shape[2], W = value.shape[3]
    cdef Py_ssize_t P = loc.shape[0], K = loc.shape[2]
    out_np = np.zeros((P, M, Cv), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t p, m, k, c, ix0, iy0, dx, dy, ix, iy
    cdef double x, y, fx, fy, wx, wy, wgt, wk
    with nogil:
        for p in range(P):
            for m in range(M):
                for k in range(K):
                    x = loc[p, m, k, 0]
                    y = loc[p, m, k, 1]
                    if not (_usable(x) and _usable(y)):
                        continue
                    wk = weight[p, m, k]
                    ix0 = <Py_ssize_t>floor(x)
                    iy0 = <Py_ssize_t>floor(y)
                    fx = x - floor(x)
                    fy = y - floor(y)
                    for dy in range(2):
                        iy = iy0 + dy
                        if iy < 0 or iy >= H:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        for dx in range(2):
                            ix = ix0 + dx
                            if ix < 0 or ix >= W:
                                continue
                            wx = fx if dx == 1 else 1.0 - fx
                            wgt = wk * wx * wy
                            for c in range(Cv):
                                out[p, m, c] += <real>(wgt * value[m, c, iy, ix])
    return out_np


def deform_agg_backward(real[:, :, :, ::1] value, real[:, :, :, ::1] loc,
                        real[:, :, ::1] weight, real[:, :, ::1] grad_out):
    cdef Py_ssize_t M = value.shape[0], Cv = value.shape[1]
    cdef Py_ssize_t H = value.shape[2], W = value.shape[3]
    cdef Py_ssize_t P = loc.shape[0], K = loc.shape[2]
    dt = np.float32 if real is float else np.float64
    gvalue_np = np.zeros((M, Cv, H, W), dtype=dt)
    gloc_np = np.zeros((P, M, K, 2), dtype=dt)
    gweight_np = np.zeros((P, M, K), dtype=dt)
    cdef real[:, :, :, ::1] gvalue = gvalue_np
    cdef real[:, :, :, ::1] gloc = gloc_np
    cdef real[:, :, ::1] gweight = gweight_np
    cdef Py_ssize_t p, m, k, c, ix0, iy0, dx, dy, ix, iy
    cdef double x, y, fx, fy, wx, wy, sx, sy, wk, dot, gw, gx, gy, go
    with nogil:
        for p in range(P):
            for m in range(M):
                for k in range(K):
                    x = loc[p, m, k, 0]
                    y = loc[p, m, k, 1]
                    if not (_usable(x) and _usable(y)):
                        continue
                    wk = weight[p, m, k]
                    ix0 = <Py_ssize_t>floor(x)
                    iy0 = <Py_ssize_t>floor(y)
                    fx = x - floor(x)
                    fy = y - floor(y)
                    gw = 0.0
                    gx = 0.0
                    gy = 0.0
                    for dy in range(2):
                        iy = iy0 + dy
                        if iy < 0 or iy >= H:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        sy = 1.0 if dy == 1 else -1.0
                        for dx in range(2):
                            ix = ix0 + dx
                            if ix < 0 or ix >= W:
                                continue
                            wx = fx if dx == 1 else 1.0 - fx
                            sx = 1.0 if dx == 1 else -1.0
                            dot = 0.0
                            for c in range(Cv):
                                go = grad_out[p, m, c]
                                dot += go * value[m, c, iy, ix]
                                gvalue[m, c, iy, ix] += <real>(wk * wx * wy * go)
                            gw += wx * wy * dot
                            gx += sx * wy * wk * dot
                            gy += sy * wx * wk * dot
                    gweight[p, m, k] = <real>gw
                    gloc[p, m, k, 0] = <real>gx
                    gloc[p, m, k, 1] = <real>gy
    return gvalue_np, gloc_np, gweight_np
