"""Hot numeric kernels with two interchangeable backends.

``DPGAN_KERNELS=numpy`` forces the pure-numpy path; ``numba`` (the default
when numba imports) uses the compiled loop kernels. Both backends share the
same signatures and agree to rounding error.
"""
import os

from . import _numpy

BACKENDS = {"numpy": _numpy}

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is optional
    _numba = None
else:
    BACKENDS["numba"] = _numba


def _select():
    wanted = os.environ.get("DPGAN_KERNELS", "numba").strip().lower()
    if wanted not in ("numba", "numpy"):
        raise ValueError(f"DPGAN_KERNELS must be 'numba' or 'numpy', got {wanted!r}")
    if wanted == "numba" and _numba is None:
        wanted = "numpy"
    return wanted


BACKEND = _select()
_impl = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active backend at runtime (used by the benchmark and tests)."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    BACKEND, _impl = name, BACKENDS[name]


def adaptive_pool_forward(x, th, tw):
    return _impl.adaptive_pool_forward(x, th, tw)


def adaptive_pool_backward(g, h, w):
    return _impl.adaptive_pool_backward(g, h, w)


def upsample_forward(x, th, tw):
    return _impl.upsample_forward(x, th, tw)


def upsample_backward(g, h, w):
    return _impl.upsample_backward(g, h, w)


def conv2d_forward(x, w, b, stride, ph, pw):
    return _impl.conv2d_forward(x, w, b, stride, ph, pw)


def conv2d_backward(g, x, w, stride, ph, pw):
    return _impl.conv2d_backward(g, x, w, stride, ph, pw)
