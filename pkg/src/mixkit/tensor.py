"""Minimal dense tensor engine with reverse-mode automatic differentiation.

Tensors wrap row-major numpy arrays (float64 by default, float32 selectable).
Operations executed inside a ``with Tape():`` block are recorded together with
their backward rules; replaying the record in reverse order propagates
gradients into every ``requires_grad`` tensor reachable from the loss.
Outside a tape, operations run as plain numpy with no recording overhead,
which is the mode the wall-clock benchmarks use.

Each tape also instruments floating-point operation counts per op kind. The
counting convention follows the cost model used by the closed-form formulas in
``mixkit.flops``: a matmul of (M,K)@(K,P) costs M*P*2K, GELU costs 9 per
element, a row softmax costs 3N per row (stabilization excluded), elementwise
add/sub/mul/div cost 1 per output element, and transcendentals count as one
operation. Shape ops (reshape, transpose, slicing, gather) are free.
"""

import numpy as np

from . import backend
from .errors import ParameterError, ShapeError, UsageError

DEFAULT_DTYPE = np.float64
LAYER_NORM_EPS = 1e-5

_TAPE_STACK = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Dense n-dimensional array participating in a gradient tape.

    ``grad`` is populated (same shape as ``data``) by ``Tape.backward`` for
    every requires_grad tensor reachable from the loss; it accumulates across
    backward calls until cleared.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # Operator sugar; the full op set lives at module level.
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Ordered record of executed operations plus a per-kind FLOP counter.

    A tape is activated as a context manager. One tape must never be used from
    two threads concurrently; tensors whose gradients are complete are
    read-only and safe to share.
    """

    def __init__(self):
        self._records = []  # (out, inputs, backward_fn)
        self._tensors = []
        self.flops = {}

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    @property
    def total_flops(self):
        return sum(self.flops.values())

    def flops_for(self, *kinds):
        return sum(self.flops.get(k, 0) for k in kinds)

    def _count(self, kind, n):
        if n:
            self.flops[kind] = self.flops.get(kind, 0) + int(n)

    def backward(self, root, seed=None):
        """Populate gradients of everything reachable from ``root``.

        With ``seed=None`` the root must be scalar and receives gradient 1.
        A ``seed`` array of the root's shape starts the sweep from an
        arbitrary output adjoint (used for Jacobian probing). Adjoints are
        per-pass temporaries; the published ``.grad`` fields accumulate
        across repeated backward calls.
        """
        if seed is None:
            if root.size != 1:
                raise UsageError(f"backward requires a scalar loss, got shape {root.shape}")
            seed_arr = np.ones_like(root.data)
        else:
            seed_arr = np.asarray(seed, dtype=root.dtype)
            if seed_arr.shape != root.data.shape:
                raise ShapeError(f"seed shape {seed_arr.shape} != root shape {root.data.shape}")
        adjoints = {id(root): seed_arr}
        tensors = {id(root): root}
        for out, inputs, backward_fn in reversed(self._records):
            d = adjoints.get(id(out))
            if d is None:
                continue
            grads = backward_fn(d)
            for tensor, grad in zip(inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + grad
                else:
                    adjoints[key] = grad
                    tensors[key] = tensor
        for key, grad in adjoints.items():
            _accumulate(tensors[key], grad)

    def zero_grads(self):
        """Clear gradients of every tensor this tape has touched."""
        for t in self._tensors:
            t.grad = None


def _accumulate(tensor, grad):
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def _record(kind, flops, out_data, inputs, backward_fn):
    """Create the output tensor; count FLOPs and register backward on the active tape."""
    tape = _active_tape()
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if tape is not None:
        tape._count(kind, flops)
        if requires:
            tape._records.append((out, inputs, backward_fn))
            tape._tensors.append(out)
            tape._tensors.extend(inputs)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------------

def add(a, b):
    out = a.data + b.data

    def backward(d):
        return _unbroadcast(d, a.shape), _unbroadcast(d, b.shape)

    return _record("add", out.size, out, (a, b), backward)


def sub(a, b):
    out = a.data - b.data

    def backward(d):
        return _unbroadcast(d, a.shape), -_unbroadcast(d, b.shape)

    return _record("add", out.size, out, (a, b), backward)


def mul(a, b):
    out = a.data * b.data

    def backward(d):
        return _unbroadcast(d * b.data, a.shape), _unbroadcast(d * a.data, b.shape)

    return _record("mul", out.size, out, (a, b), backward)


def neg(a):
    def backward(d):
        return (-d,)

    return _record("mul", a.size, -a.data, (a,), backward)


def matmul(a, b):
    """Stacked matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    k = a.shape[-1]

    def backward(d):
        da = _unbroadcast(d @ np.swapaxes(b.data, -1, -2), a.shape)
        db = _unbroadcast(np.swapaxes(a.data, -1, -2) @ d, b.shape)
        return da, db

    return _record("matmul", out.size * 2 * k, out, (a, b), backward)


def reduce_sum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(d):
        if axis is None:
            return (np.broadcast_to(d, a.shape).astype(a.dtype, copy=False),)
        g = d
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)

    return _record("add", a.size, out, (a,), backward)


# -- shape ops (free) ----------------------------------------------------------

def reshape(a, shape):
    out = a.data.reshape(shape)

    def backward(d):
        return (d.reshape(a.shape),)

    return _record("reshape", 0, out, (a,), backward)


def swapaxes(a, ax1, ax2):
    out = np.swapaxes(a.data, ax1, ax2)

    def backward(d):
        return (np.swapaxes(d, ax1, ax2),)

    return _record("reshape", 0, out, (a,), backward)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index]

    def backward(d):
        g = np.zeros_like(a.data)
        g[index] = d
        return (g,)

    return _record("reshape", 0, out, (a,), backward)


def repeat_rows(v, n):
    """Stack ``n`` copies of a vector into an (n, len(v)) matrix."""
    if v.ndim != 1:
        raise ShapeError(f"repeat_rows expects a vector, got shape {v.shape}")
    out = np.broadcast_to(v.data, (n, v.shape[0])).copy()

    def backward(d):
        return (d.sum(axis=0),)

    return _record("reshape", 0, out, (v,), backward)


def gather_rows(table, ids):
    """Embedding lookup: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def backward(d):
        g = np.zeros_like(table.data)
        np.add.at(g, ids.reshape(-1), d.reshape(-1, table.shape[-1]))
        return (g,)

    return _record("gather", 0, out, (table,), backward)


# -- nonlinearities and normalization ------------------------------------------

def gelu(x):
    """Tanh-approximation GELU, 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    out = backend.gelu_fwd(x.data)

    def backward(d):
        return (backend.gelu_bwd(x.data, d),)

    return _record("gelu", 9 * x.size, out, (x,), backward)


def softmax_rows(x):
    """Row softmax over the last axis, numerically stabilized by row-max subtraction.

    Instrumented cost is 3N per row (exp, divide, and N additions), matching
    the closed-form convention which excludes the stabilization pass.
    """
    n = x.shape[-1]
    flat = np.ascontiguousarray(x.data.reshape(-1, n))
    out = backend.softmax_fwd(flat).reshape(x.shape)

    def backward(d):
        y = out.reshape(-1, n)
        dx = backend.softmax_bwd(y, np.ascontiguousarray(d.reshape(-1, n)))
        return (dx.reshape(x.shape),)

    return _record("softmax", 3 * x.size, out, (x,), backward)


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Zero-mean/unit-variance over the last axis, then elementwise affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match feature dim {d}")
    mean = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gain.data + bias.data

    def backward(dout):
        dy = dout * gain.data
        m1 = dy.mean(axis=-1, keepdims=True)
        m2 = (dy * xhat).mean(axis=-1, keepdims=True)
        dx = rstd * (dy - m1 - xhat * m2)
        lead = tuple(range(dout.ndim - 1))
        dg = (dout * xhat).sum(axis=lead)
        db = dout.sum(axis=lead)
        return dx, dg, db

    return _record("layer_norm", 8 * x.size, out, (x, gain, bias), backward)


def dropout(x, p, training, rng):
    """Zero each element with probability p and scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        def backward(d):
            return (d,)

        return _record("dropout", 0, x.data, (x,), backward)
    keep = (rng.random(x.shape) >= p)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    mask = keep.astype(x.dtype) * scale
    out = x.data * mask

    def backward(d):
        return (d * mask,)

    return _record("dropout", 2 * x.size, out, (x,), backward)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under row logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy expects (B,C) logits and (B,) labels, got {logits.shape} and {labels.shape}")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + m
    rows = np.arange(z.shape[0])
    nll = (lse[:, 0] - z[rows, labels]).mean()

    def backward(d):
        soft = np.exp(z - lse)
        soft[rows, labels] -= 1.0
        return (soft * (d / z.shape[0]),)

    return _record("cross_entropy", 5 * logits.size, np.asarray(nll, dtype=logits.dtype), (logits,), backward)


def apply_op(kind, flops, out_data, inputs, backward_fn):
    """Extension point for custom ops defined outside this module.

    ``backward_fn(dout)`` must return one gradient array (or None) per input.
    """
    return _record(kind, flops, out_data, inputs, backward_fn)
