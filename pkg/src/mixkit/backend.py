"""Kernel backend selection: compiled extension when available, numpy otherwise.

The compiled module ``mixkit._kernels`` is optional. Import-time selection can
be overridden with the environment variable ``MIXKIT_PURE=1``, which forces the
numpy fallbacks (useful for testing and for the kernel comparison benchmark).
Both paths implement identical math; within one process the selected path is
fixed, so forward passes stay bitwise reproducible.
"""

import os

import numpy as np

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

compiled_available = _kernels is not None
using_compiled = compiled_available and os.environ.get("MIXKIT_PURE", "") != "1"

GELU_K = 0.7978845608028654  # sqrt(2/pi)
GELU_C = 0.044715


def backend_name():
    return "compiled" if using_compiled else "numpy"


# -- numpy reference implementations -----------------------------------------

def gelu_fwd_numpy(x):
    u = GELU_K * (x + GELU_C * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd_numpy(x, dy):
    u = GELU_K * (x + GELU_C * x * x * x)
    t = np.tanh(u)
    du = GELU_K * (1.0 + 3.0 * GELU_C * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def softmax_fwd_numpy(x):
    # x: (rows, cols); row-max subtraction for stability
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd_numpy(y, dy):
    dot = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - dot)


# -- compiled wrappers --------------------------------------------------------

def gelu_fwd_compiled(x):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _kernels.gelu_fwd(x.ravel(), out.ravel())
    return out


def gelu_bwd_compiled(x, dy):
    x = np.ascontiguousarray(x)
    dy = np.ascontiguousarray(dy)
    dx = np.empty_like(x)
    _kernels.gelu_bwd(x.ravel(), dy.ravel(), dx.ravel())
    return dx


def softmax_fwd_compiled(x):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _kernels.softmax_fwd(x, out)
    return out


def softmax_bwd_compiled(y, dy):
    y = np.ascontiguousarray(y)
    dy = np.ascontiguousarray(dy)
    dx = np.empty_like(y)
    _kernels.softmax_bwd(y, dy, dx)
    return dx


if using_compiled:
    gelu_fwd = gelu_fwd_compiled
    gelu_bwd = gelu_bwd_compiled
    softmax_fwd = softmax_fwd_compiled
    softmax_bwd = softmax_bwd_compiled
else:
    gelu_fwd = gelu_fwd_numpy
    gelu_bwd = gelu_bwd_numpy
    softmax_fwd = softmax_fwd_numpy
    softmax_bwd = softmax_bwd_numpy
