"""Backend selection for the convolution/pooling hot kernels.

The compiled extension is preferred when it imported cleanly; otherwise the
NumPy fallback is used. ``SSRL_BACKEND`` (``auto`` | ``cython`` | ``numpy``)
overrides the choice at import time, and :func:`use_backend` switches it at
runtime (used by the tests and the benchmark).
"""

import os

from . import _backend_numpy

try:
    from . import _kernels_c as _backend_cython
except ImportError:
    _backend_cython = None

_BACKENDS = {"numpy": _backend_numpy}
if _backend_cython is not None:
    _BACKENDS["cython"] = _backend_cython


def available_backends() -> tuple:
    return tuple(sorted(_BACKENDS))


def _resolve(name: str):
    if name == "auto":
        name = "cython" if _backend_cython is not None else "numpy"
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}")
    return _BACKENDS[name]


_active = _resolve(os.environ.get("SSRL_BACKEND", "auto"))


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous backend's name."""
    global _active
    previous = _active.NAME
    _active = _resolve(name)
    return previous


def backend_name() -> str:
    return _active.NAME


def get_backend(name: str):
    return _resolve(name)


def conv2d_forward(x, w, b):
    return _active.conv2d_forward(x, w, b)


def conv2d_backward(x, w, gy):
    return _active.conv2d_backward(x, w, gy)


def maxpool2_forward(x):
    return _active.maxpool2_forward(x)


def maxpool2_backward(idx, gy):
    return _active.maxpool2_backward(idx, gy)
