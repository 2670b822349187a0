# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution/pooling kernels (hot path).

Same call contract as ``_backend_numpy``. Inner loops run over contiguous
rows through raw pointers with the three kernel taps of a row fused, so the
C compiler can vectorize them; parallel regions split over independent
output slices only, so results are bit-identical regardless of thread count
or schedule.
"""

import numpy as np

from cython.parallel cimport prange

NAME = "cython"

ctypedef fused real:
    float
    double


def _conv_fwd(real[:, :, :, ::1] xp, real[:, :, :, ::1] w, real[::1] b,
              real[:, :, :, ::1] out):
    cdef Py_ssize_t B = out.shape[0], O = out.shape[1]
    cdef Py_ssize_t H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t C = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t bo, bb, oc, ic, ky, y, xx
    cdef real w0, w1, w2
    cdef real *orow
    cdef const real *irow
    for bo in prange(B * O, nogil=True, schedule='static'):
        bb = bo // O
        oc = bo % O
        for y in range(H):
            orow = &out[bb, oc, y, 0]
            for xx in range(W):
                orow[xx] = b[oc]
        for ic in range(C):
            if K == 1:
                w0 = w[oc, ic, 0, 0]
                for y in range(H):
                    orow = &out[bb, oc, y, 0]
                    irow = &xp[bb, ic, y, 0]
                    for xx in range(W):
                        orow[xx] += w0 * irow[xx]
            else:
                for ky in range(3):
                    w0 = w[oc, ic, ky, 0]
                    w1 = w[oc, ic, ky, 1]
                    w2 = w[oc, ic, ky, 2]
                    for y in range(H):
                        orow = &out[bb, oc, y, 0]
                        irow = &xp[bb, ic, y + ky, 0]
                        for xx in range(W):
                            orow[xx] += (w0 * irow[xx] + w1 * irow[xx + 1]
                                         + w2 * irow[xx + 2])


def _conv_bwd_w(real[:, :, :, ::1] xp, real[:, :, :, ::1] gy,
                real[:, :, :, ::1] gw, real[::1] gb):
    cdef Py_ssize_t B = gy.shape[0], O = gy.shape[1]
    cdef Py_ssize_t H = gy.shape[2], W = gy.shape[3]
    cdef Py_ssize_t C = gw.shape[1], K = gw.shape[2]
    cdef Py_ssize_t oc, bb, ic, ky, y, xx
    cdef real acc, a0, a1, a2, g
    cdef const real *grow
    cdef const real *irow
    for oc in prange(O, nogil=True, schedule='static'):
        acc = 0
        for bb in range(B):
            for y in range(H):
                grow = &gy[bb, oc, y, 0]
                for xx in range(W):
                    acc = acc + grow[xx]
        gb[oc] = acc
        for ic in range(C):
            if K == 1:
                acc = 0
                for bb in range(B):
                    for y in range(H):
                        grow = &gy[bb, oc, y, 0]
                        irow = &xp[bb, ic, y, 0]
                        for xx in range(W):
                            acc = acc + grow[xx] * irow[xx]
                gw[oc, ic, 0, 0] = acc
            else:
                for ky in range(3):
                    a0 = 0
                    a1 = 0
                    a2 = 0
                    for bb in range(B):
                        for y in range(H):
                            grow = &gy[bb, oc, y, 0]
                            irow = &xp[bb, ic, y + ky, 0]
                            for xx in range(W):
                                g = grow[xx]
                                a0 = a0 + g * irow[xx]
                                a1 = a1 + g * irow[xx + 1]
                                a2 = a2 + g * irow[xx + 2]
                    gw[oc, ic, ky, 0] = a0
                    gw[oc, ic, ky, 1] = a1
                    gw[oc, ic, ky, 2] = a2


def _conv_bwd_x(real[:, :, :, ::1] gyp, real[:, :, :, ::1] w,
                real[:, :, :, ::1] gx):
    cdef Py_ssize_t B = gx.shape[0], C = gx.shape[1]
    cdef Py_ssize_t H = gx.shape[2], W = gx.shape[3]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t bc, bb, ic, oc, ky, y, xx
    cdef real w0, w1, w2
    cdef real *orow
    cdef const real *irow
    for bc in prange(B * C, nogil=True, schedule='static'):
        bb = bc // C
        ic = bc % C
        for y in range(H):
            orow = &gx[bb, ic, y, 0]
            for xx in range(W):
                orow[xx] = 0
        for oc in range(O):
            if K == 1:
                w0 = w[oc, ic, 0, 0]
                for y in range(H):
                    orow = &gx[bb, ic, y, 0]
                    irow = &gyp[bb, oc, y, 0]
                    for xx in range(W):
                        orow[xx] += w0 * irow[xx]
            else:
                for ky in range(3):
                    # correlate with the flipped kernel row
                    w0 = w[oc, ic, 2 - ky, 2]
                    w1 = w[oc, ic, 2 - ky, 1]
                    w2 = w[oc, ic, 2 - ky, 0]
                    for y in range(H):
                        orow = &gx[bb, ic, y, 0]
                        irow = &gyp[bb, oc, y + ky, 0]
                        for xx in range(W):
                            orow[xx] += (w0 * irow[xx] + w1 * irow[xx + 1]
                                         + w2 * irow[xx + 2])


def _pool_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
              unsigned char[:, :, :, ::1] idx):
    cdef Py_ssize_t B = out.shape[0], C = out.shape[1]
    cdef Py_ssize_t h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t bc, bb, ic, y, xx
    cdef real best, v
    cdef unsigned char k
    for bc in prange(B * C, nogil=True, schedule='static'):
        bb = bc // C
        ic = bc % C
        for y in range(h):
            for xx in range(w):
                best = x[bb, ic, 2 * y, 2 * xx]
                k = 0
                v = x[bb, ic, 2 * y, 2 * xx + 1]
                if v > best:
                    best = v
                    k = 1
                v = x[bb, ic, 2 * y + 1, 2 * xx]
                if v > best:
                    best = v
                    k = 2
                v = x[bb, ic, 2 * y + 1, 2 * xx + 1]
                if v > best:
                    best = v
                    k = 3
                out[bb, ic, y, xx] = best
                idx[bb, ic, y, xx] = k


def _pool_bwd(unsigned char[:, :, :, ::1] idx, real[:, :, :, ::1] gy,
              real[:, :, :, ::1] gx):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1]
    cdef Py_ssize_t h = gy.shape[2], w = gy.shape[3]
    cdef Py_ssize_t bc, bb, ic, y, xx
    cdef unsigned char k
    for bc in prange(B * C, nogil=True, schedule='static'):
        bb = bc // C
        ic = bc % C
        for y in range(h):
            for xx in range(w):
                k = idx[bb, ic, y, xx]
                gx[bb, ic, 2 * y + (k >> 1), 2 * xx + (k & 1)] = gy[bb, ic, y, xx]


def _padded(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    B, C, H, W = x.shape
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
    out[:, :, pad:-pad, pad:-pad] = x
    return out


def conv2d_forward(x, w, b):
    k = w.shape[2]
    out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    _conv_fwd(_padded(x, k // 2), w, b, out)
    return out


def conv2d_backward(x, w, gy):
    k = w.shape[2]
    pad = k // 2
    gy = np.ascontiguousarray(gy)
    gw = np.empty_like(w)
    gb = np.empty(w.shape[0], dtype=w.dtype)
    gx = np.empty_like(x)
    _conv_bwd_w(_padded(x, pad), gy, gw, gb)
    _conv_bwd_x(_padded(gy, pad), w, gx)
    return gx, gw, gb


def maxpool2_forward(x):
    B, C, H, W = x.shape
    out = np.empty((B, C, H // 2, W // 2), dtype=x.dtype)
    idx = np.empty((B, C, H // 2, W // 2), dtype=np.uint8)
    _pool_fwd(np.ascontiguousarray(x), out, idx)
    return out, idx


def maxpool2_backward(idx, gy):
    B, C, h, w = gy.shape
    gx = np.zeros((B, C, 2 * h, 2 * w), dtype=gy.dtype)
    _pool_bwd(idx, np.ascontiguousarray(gy), gx)
    return gx
