"""Numpy fallback for the hot convolution/pooling kernels.

Same contracts as the compiled module in ``_ckernels.pyx``; selected at
import time by :mod:`wordspot.nn.kernels` when the extension is absent
or disabled.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


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


def _windows(x):
    # (N, C, H, W, 3, 3) view over the zero-padded input
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(xp, (3, 3), axis=(2, 3))


def conv3x3_forward(x, w, b):
    """3x3 convolution, stride 1, zero padding 1; output (N, Cout, H, W)."""
    _check_conv_shapes(x, w, b)
    win = _windows(x)
    out = np.einsum("ncyxij,ocij->noyx", win, w, optimize=True)
    out += b[None, :, None, None]
    return out


def conv3x3_backward(x, w, grad_out):
    """Gradients of conv3x3_forward w.r.t. input, weights and bias."""
    if grad_out.shape != (x.shape[0], w.shape[0], x.shape[2], x.shape[3]):
        raise ValueError("grad_out shape %s does not match conv output" % (grad_out.shape,))
    win = _windows(x)
    grad_w = np.einsum("ncyxij,noyx->ocij", win, grad_out, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    # input gradient of a same-padded conv is a same-padded conv of the
    # output gradient with spatially flipped, channel-swapped kernels
    w_flip = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gwin = _windows(grad_out)
    grad_x = np.einsum("ncyxij,ocij->noyx", gwin, w_flip, optimize=True)
    return grad_x, grad_w, grad_b


def maxpool2x2_forward(x):
    """2x2 max pooling with stride 2; trailing odd row/column dropped.

    Returns (out, argmax) where argmax holds the in-window offset
    (row-major, 0..3) of the first maximum.
    """
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError("maxpool2x2 needs H >= 2 and W >= 2, got %dx%d" % (h, w))
    ho, wo = h // 2, w // 2
    win = x[:, :, : ho * 2, : wo * 2].reshape(n, c, ho, 2, wo, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2x2_backward(x_shape, argmax, grad_out):
    """Route output gradients back to the argmax positions."""
    n, c, h, w = x_shape
    ho, wo = argmax.shape[2], argmax.shape[3]
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    yi = 2 * np.arange(ho)[None, None, :, None] + argmax // 2
    xi = 2 * np.arange(wo)[None, None, None, :] + argmax % 2
    grad_x[ni, ci, yi, xi] = grad_out
    return grad_x
