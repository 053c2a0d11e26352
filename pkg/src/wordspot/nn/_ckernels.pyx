# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the 3x3 convolution and 2x2 max pooling.

Hand-written loops over C-contiguous arrays; no BLAS, no threads, so the
results are bitwise reproducible for a fixed input.  The numpy fallback
in _pykernels.py implements the same contracts.
"""

import numpy as np

cimport cython

BACKEND = "cython"

ctypedef fused real:
    float
    double


def _check_conv_shapes(x, w, b):
    if x.ndim != 4 or w.ndim != 4 or b.ndim != 1:
        raise ValueError("conv3x3 expects x (N,C,H,W), w (Cout,Cin,3,3), b (Cout,)")
    if w.shape[2:] != (3, 3):
        raise ValueError("conv3x3 kernel must be 3x3, got %s" % (w.shape[2:],))
    if x.shape[1] != w.shape[1]:
        raise ValueError("channel mismatch: input has %d, weights expect %d"
                         % (x.shape[1], w.shape[1]))
    if b.shape[0] != w.shape[0]:
        raise ValueError("bias length %d does not match %d filters" % (b.shape[0], w.shape[0]))


@cython.initializedcheck(False)
cdef void _conv_forward_loop(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                             real[::1] b, real[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0]
    cdef Py_ssize_t n, co, ci, ky, kx, y, xx, dy, dx, y0, y1, x0, x1
    cdef real wv
    for n in range(N):
        for co in range(Cout):
            for y in range(H):
                for xx in range(W):
                    out[n, co, y, xx] = b[co]
            for ci in range(Cin):
                for ky in range(3):
                    dy = ky - 1
                    y0 = -dy if dy < 0 else 0
                    y1 = H - dy if dy > 0 else H
                    for kx in range(3):
                        dx = kx - 1
                        x0 = -dx if dx < 0 else 0
                        x1 = W - dx if dx > 0 else W
                        wv = w[co, ci, ky, kx]
                        for y in range(y0, y1):
                            for xx in range(x0, x1):
                                out[n, co, y, xx] = out[n, co, y, xx] + wv * x[n, ci, y + dy, xx + dx]


@cython.initializedcheck(False)
cdef void _conv_backward_loop(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                              real[:, :, :, ::1] go, real[:, :, :, ::1] gx,
                              real[:, :, :, ::1] gw, real[::1] gb) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0]
    cdef Py_ssize_t n, co, ci, ky, kx, y, xx, dy, dx, y0, y1, x0, x1
    cdef real wv, acc
    for n in range(N):
        for co in range(Cout):
            acc = 0
            for y in range(H):
                for xx in range(W):
                    acc = acc + go[n, co, y, xx]
            gb[co] = gb[co] + acc
            for ci in range(Cin):
                for ky in range(3):
                    dy = ky - 1
                    y0 = -dy if dy < 0 else 0
                    y1 = H - dy if dy > 0 else H
                    for kx in range(3):
                        dx = kx - 1
                        x0 = -dx if dx < 0 else 0
                        x1 = W - dx if dx > 0 else W
                        wv = w[co, ci, ky, kx]
                        acc = 0
                        for y in range(y0, y1):
                            for xx in range(x0, x1):
                                acc = acc + x[n, ci, y + dy, xx + dx] * go[n, co, y, xx]
                                gx[n, ci, y + dy, xx + dx] = gx[n, ci, y + dy, xx + dx] + wv * go[n, co, y, xx]
                        gw[co, ci, ky, kx] = gw[co, ci, ky, kx] + acc


def conv3x3_forward(x, w, b):
    """3x3 convolution, stride 1, zero padding 1; output (N, Cout, H, W)."""
    _check_conv_shapes(x, w, b)
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    b = np.ascontiguousarray(b, dtype=x.dtype)
    out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    if x.dtype == np.float64:
        _conv_forward_loop[double](x, w, b, out)
    elif x.dtype == np.float32:
        _conv_forward_loop[float](x, w, b, out)
    else:
        raise TypeError("conv3x3 supports float32/float64, got %s" % x.dtype)
    return out


def conv3x3_backward(x, w, grad_out):
    """Gradients of conv3x3_forward w.r.t. input, weights and bias."""
    if grad_out.shape != (x.shape[0], w.shape[0], x.shape[2], x.shape[3]):
        raise ValueError("grad_out shape %s does not match conv output" % (grad_out.shape,))
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    go = np.ascontiguousarray(grad_out, dtype=x.dtype)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros(w.shape[0], dtype=x.dtype)
    if x.dtype == np.float64:
        _conv_backward_loop[double](x, w, go, gx, gw, gb)
    elif x.dtype == np.float32:
        _conv_backward_loop[float](x, w, go, gx, gw, gb)
    else:
        raise TypeError("conv3x3 supports float32/float64, got %s" % x.dtype)
    return gx, gw, gb


@cython.initializedcheck(False)
cdef void _maxpool_forward_loop(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                                long[:, :, :, ::1] argmax) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t n, c, yo, xo, dy, dx, idx, best_idx
    cdef real v, best
    for n in range(N):
        for c in range(C):
            for yo in range(Ho):
                for xo in range(Wo):
                    best = x[n, c, 2 * yo, 2 * xo]
                    best_idx = 0
                    idx = 0
                    for dy in range(2):
                        for dx in range(2):
                            v = x[n, c, 2 * yo + dy, 2 * xo + dx]
                            if v > best:
                                best = v
                                best_idx = idx
                            idx = idx + 1
                    out[n, c, yo, xo] = best
                    argmax[n, c, yo, xo] = best_idx


def maxpool2x2_forward(x):
    """2x2 max pooling with stride 2; trailing odd row/column dropped.

    Returns (out, argmax) where argmax holds the in-window offset
    (row-major, 0..3) of the first maximum.
    """
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError("maxpool2x2 needs H >= 2 and W >= 2, got %dx%d" % (h, w))
    x = np.ascontiguousarray(x)
    ho, wo = h // 2, w // 2
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    argmax = np.empty((n, c, ho, wo), dtype=np.int64)
    if x.dtype == np.float64:
        _maxpool_forward_loop[double](x, out, argmax)
    elif x.dtype == np.float32:
        _maxpool_forward_loop[float](x, out, argmax)
    else:
        raise TypeError("maxpool2x2 supports float32/float64, got %s" % x.dtype)
    return out, argmax


@cython.initializedcheck(False)
cdef void _maxpool_backward_loop(long[:, :, :, ::1] argmax, real[:, :, :, ::1] go,
                                 real[:, :, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t N = go.shape[0], C = go.shape[1]
    cdef Py_ssize_t Ho = go.shape[2], Wo = go.shape[3]
    cdef Py_ssize_t n, c, yo, xo, idx
    for n in range(N):
        for c in range(C):
            for yo in range(Ho):
                for xo in range(Wo):
                    idx = argmax[n, c, yo, xo]
                    gx[n, c, 2 * yo + idx / 2, 2 * xo + idx % 2] = go[n, c, yo, xo]


def maxpool2x2_backward(x_shape, argmax, grad_out):
    """Route output gradients back to the argmax positions."""
    go = np.ascontiguousarray(grad_out)
    am = np.ascontiguousarray(argmax, dtype=np.int64)
    gx = np.zeros(x_shape, dtype=go.dtype)
    if go.dtype == np.float64:
        _maxpool_backward_loop[double](am, go, gx)
    elif go.dtype == np.float32:
        _maxpool_backward_loop[float](am, go, gx)
    else:
        raise TypeError("maxpool2x2 supports float32/float64, got %s" % go.dtype)
    return gx
