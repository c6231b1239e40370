"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available. Set LOCALATTR_KERNELS=python|cython to force a backend,
or call set_backend() (used by the benchmark and tests).
"""

import os

from . import _pykernels

_impl = _pykernels


def _load(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels  # noqa: import error propagates when forced

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def set_backend(name):
    """Switch the active kernel backend ('python' or 'cython')."""
    global _impl
    _impl = _load(name)
    return _impl.BACKEND_NAME


def get_backend():
    return _impl.BACKEND_NAME


def conv2d_forward(x, w):
    return _impl.conv2d_forward(x, w)


def conv2d_backward_input(grad_out, w, in_h, in_w):
    return _impl.conv2d_backward_input(grad_out, w, in_h, in_w)


def conv2d_backward_weight(x, grad_out, kh, kw):
    return _impl.conv2d_backward_weight(x, grad_out, kh, kw)


def maxpool2_forward(x):
    return _impl.maxpool2_forward(x)


def maxpool2_backward(grad_out, idx, in_h, in_w):
    return _impl.maxpool2_backward(grad_out, idx, in_h, in_w)


_requested = os.environ.get("LOCALATTR_KERNELS", "auto")
if _requested == "auto":
    try:
        set_backend("cython")
    except ImportError:
        pass
else:
    set_backend(_requested)
