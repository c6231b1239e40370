"""Pure numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable. All
functions take and return C-contiguous float64 arrays; convolution is
stride-1 "valid" (padding is applied by the caller).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def conv2d_forward(x, w):
    """Valid cross-correlation. x: (B,C,H,W), w: (O,C,kh,kw) -> (B,O,Ho,Wo)."""
    kh, kw = w.shape[2], w.shape[3]
    cols = sliding_window_view(x, (kh, kw), axis=(2, 3))
    out = np.einsum("bcijuv,ocuv->boij", cols, w, optimize=True)
    return np.ascontiguousarray(out)


def conv2d_backward_input(grad_out, w, in_h, in_w):
    """Gradient wrt x of conv2d_forward. grad_out: (B,O,Ho,Wo) -> (B,C,H,W)."""
    kh, kw = w.shape[2], w.shape[3]
    padded = np.pad(grad_out, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    cols = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    w_flip = w[:, :, ::-1, ::-1]
    dx = np.einsum("boijuv,ocuv->bcij", cols, w_flip, optimize=True)
    assert dx.shape[2] == in_h and dx.shape[3] == in_w
    return np.ascontiguousarray(dx)


def conv2d_backward_weight(x, grad_out, kh, kw):
    """Gradient wrt w of conv2d_forward. -> (O,C,kh,kw)."""
    cols = sliding_window_view(x, (kh, kw), axis=(2, 3))
    dw = np.einsum("bcijuv,boij->ocuv", cols, grad_out, optimize=True)
    return np.ascontiguousarray(dw)


def maxpool2_forward(x):
    """2x2 max pooling, stride 2. x: (B,C,H,W) with even H,W.

    Returns (out, idx) where idx holds the row-major position (0..3) of the
    max inside each window; ties pick the first occurrence.
    """
    b, c, h, w = x.shape
    windows = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = np.ascontiguousarray(windows).reshape(b, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.uint8)


def maxpool2_backward(grad_out, idx, in_h, in_w):
    """Scatters grad_out back to the argmax positions. -> (B,C,H,W)."""
    b, c, hh, ww = grad_out.shape
    scattered = np.zeros((b, c, hh, ww, 4), dtype=np.float64)
    np.put_along_axis(scattered, idx[..., None].astype(np.int64), grad_out[..., None], axis=-1)
    dx = scattered.reshape(b, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx).reshape(b, c, in_h, in_w)
