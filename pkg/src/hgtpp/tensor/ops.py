"""Differentiable primitives.

Each function computes its forward value with numpy and, when recording,
registers a vector-Jacobian product on the ambient tape.  Constant operands
may be passed as plain arrays or scalars.
"""
import numpy as np

from .. import kernels
from .core import DomainError, ShapeError, as_tensor, emit


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a, b):
    """``a @ b`` for ``a`` of any rank >= 1 and ``b`` a vector or a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    out = np.matmul(av, bv)
    n = av.shape[-1]

    def vjp(g):
        a2 = av.reshape(-1, n)
        if bv.ndim == 2:
            ga = np.matmul(g, bv.T)
            gb = a2.T @ g.reshape(-1, bv.shape[1])
        else:
            ga = g[..., None] * bv
            gb = a2.T @ g.reshape(-1)
        return ga.reshape(av.shape), gb

    return emit("matmul", (a, b), out, vjp)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return emit("transpose", (a,), a.value.T.copy(), lambda g: (g.T,))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from None
    return emit("reshape", (a,), out, lambda g: (g.reshape(old),))


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return emit("add", (a, b), a.value + b.value,
                lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return emit("sub", (a, b), a.value - b.value,
                lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return emit("mul", (a, b), av * bv,
                lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return emit("scale", (a,), a.value * c, lambda g: (g * c,))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return emit("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))


def cos(a):
    a = as_tensor(a)
    x = a.value
    return emit("cos", (a,), np.cos(x), lambda g: (-g * np.sin(x),))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.value)
    return emit("exp", (a,), y, lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    x = a.value
    if np.any(x <= 0):
        raise DomainError(f"log: non-positive input (min {x.min():.6g})")
    return emit("log", (a,), np.log(x), lambda g: (g / x,))


def square(a):
    a = as_tensor(a)
    x = a.value
    return emit("square", (a,), x * x, lambda g: (2.0 * g * x,))


def sigmoid_values(x):
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(a):
    """log(1 + e^x), computed without overflow."""
    a = as_tensor(a)
    x = a.value
    return emit("softplus", (a,), np.logaddexp(0.0, x), lambda g: (g * sigmoid_values(x),))


def softmax(a):
    """Softmax over the last axis."""
    a = as_tensor(a)
    if a.ndim < 1 or a.shape[-1] < 1:
        raise ShapeError(f"softmax: need at least one scalar, got shape {a.shape}")
    x = a.value
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return emit("softmax", (a,), y, vjp)


def sum(a, axis=None):  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return emit("sum", (a,), out, vjp)


def mean(a, axis=None):
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {a.shape}")
    return scale(sum(a, axis), 1.0 / count)


def dot(a, b):
    """Inner product over the last axis (a scalar for two vectors)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ")
    av, bv = a.value, b.value
    out = (av * bv).sum(axis=-1)

    def vjp(g):
        g = np.asarray(g)[..., None]
        return g * bv, g * av

    return emit("dot", (a, b), out, vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return emit("concat", tuple(tensors), out, vjp)


def gather(a, idx):
    """Rows of ``a`` selected by an integer index array of any shape."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather: index out of range for shape {a.shape}")
    n, row_shape = a.shape[0], a.shape[1:]
    out = a.value[idx]

    def vjp(g):
        return (kernels.index_add_rows(n, idx, g, row_shape),)

    return emit("gather", (a,), out, vjp)


def scatter_rows(base, idx, rows):
    """Copy of ``base`` with rows ``idx`` (distinct) replaced by ``rows``."""
    base, rows = as_tensor(base), as_tensor(rows)
    idx = np.asarray(idx, dtype=np.int64)
    if rows.shape != idx.shape + base.shape[1:]:
        raise ShapeError(f"scatter_rows: rows {rows.shape} do not fit base {base.shape}")
    out = base.value.copy()
    out[idx] = rows.value

    def vjp(g):
        gb = g.copy()
        gb[idx] = 0.0
        return gb, g[idx]

    return emit("scatter_rows", (base, rows), out, vjp)


def attention(q, k, v, qmask, kmask, exclude_self):
    """Masked single-head attention over padded sets: softmax(q kᵀ) v.

    ``q`` is (B, Kq, d), ``k`` and ``v`` are (B, Kk, d).  Query ``i`` attends
    to every real key, skipping key ``i`` when ``exclude_self`` is set.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 3 or k.ndim != 3 or k.shape != v.shape or q.shape[0] != k.shape[0] \
            or q.shape[2] != k.shape[2]:
        raise ShapeError(f"attention: incompatible shapes {q.shape} and {k.shape}")
    qv, kv, vv = q.value, k.value, v.value
    out, alpha = kernels.attention_forward(qv, kv, vv, qmask, kmask, exclude_self)

    def vjp(g):
        return kernels.attention_backward(g, qv, kv, vv, alpha)

    res = emit("attention", (q, k, v), out, vjp)
    res.alpha = alpha
    return res


def segment_sum(a, segments, n_segments):
    """Sum rows of ``a`` that share a segment id; the transpose of :func:`gather`."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != a.shape[:1]:
        raise ShapeError(f"segment_sum: {segments.shape[0] if segments.ndim else 0} ids for shape {a.shape}")
    out = kernels.index_add_rows(n_segments, segments, a.value, a.shape[1:])
    return emit("segment_sum", (a,), out, lambda g: (g[segments],))
