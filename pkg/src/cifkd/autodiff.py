"""Dense-tensor math with reverse-mode differentiation.

Tensors wrap row-major numpy arrays (float32 by default, float64 under
``precision(np.float64)``). Every operation checks shapes up front, checks
the result for NaN/Inf, and registers a backward closure. ``backward(loss)``
replays those closures in exact reverse execution order, summing gradient
contributions for tensors used more than once. No broadcasting beyond
scalar-tensor; reshape explicitly.
"""

from __future__ import annotations

import contextlib
import itertools
import threading

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class GraphError(RuntimeError):
    """Misuse of the gradient graph (non-scalar loss, re-run, detached)."""


_state = threading.local()


def _default_dtype():
    return getattr(_state, "dtype", np.float32)


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def precision(dtype):
    """Set the dtype for tensors created inside the block (e.g. np.float64)."""
    prev = _default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = prev


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


# Monotonic stamps give the exact execution order of recorded ops.
_stamp_counter = itertools.count()


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_op", "_stamp", "_done")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None,
                 _op="leaf", dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw array data, not another Tensor")
        if _parents:
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=dtype or _default_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled()
        self._parents = _parents if self.requires_grad else ()
        self._backward_fn = _backward_fn if self.requires_grad else None
        self._op = _op
        self._stamp = next(_stamp_counter)
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has {self.data.size} elements")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # small amount of operator sugar; everything else is a module function
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    """Create a leaf tensor."""
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _check_finite(op: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op}: produced non-finite values")


def _accumulate(t: Tensor, g: np.ndarray):
    if g.shape != t.data.shape:
        raise ShapeError(f"gradient shape {g.shape} != tensor shape {t.data.shape}")
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad = t.grad + g.astype(t.data.dtype, copy=False)


def _make(op: str, data, parents, backward_fn) -> Tensor:
    arr = np.asarray(data)
    _check_finite(op, arr)
    rg = _grad_enabled() and any(p.requires_grad for p in parents)
    return Tensor(arr, requires_grad=rg, _parents=tuple(parents),
                  _backward_fn=backward_fn if rg else None, _op=op)


def backward(loss: Tensor):
    """Populate .grad on every requires_grad leaf reachable from ``loss``.

    Gradients add onto existing buffers; call zero_grad between steps.
    Running backward twice from the same loss tensor is an error.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphError("backward: loss is detached from any requires_grad leaf")
    if loss._done:
        raise GraphError("backward: already run for this loss; rebuild the graph")
    loss._done = True

    # Reachable requires_grad nodes, visited in reverse execution order.
    # Consumers always carry higher stamps than their inputs, so by the time a
    # node is visited every contribution to its gradient has been summed.
    seen = {id(loss): loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda t: t._stamp, reverse=True)

    grads = {id(loss): np.ones_like(loss.data)}
    for node in order:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            _accumulate(node, g)  # leaf: fold into the persistent buffer
            continue
        for parent, contrib in node._backward_fn(g):
            if not parent.requires_grad:
                continue
            contrib = np.asarray(contrib)
            if contrib.shape != parent.data.shape:
                raise ShapeError(
                    f"{node._op} backward: grad shape {contrib.shape} != {parent.data.shape}")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b, negate_rhs=False) -> Tensor:
    """Elementwise add; b may be a same-shape tensor, a scalar tensor, or a float."""
    if isinstance(b, (int, float)):
        out = a.data + (-b if negate_rhs else b)
        return _make("add", out, (a,), lambda g: [(a, g)])
    if not isinstance(b, Tensor):
        raise TypeError("add: rhs must be Tensor or float")
    if b.data.shape == a.data.shape:
        data = a.data - b.data if negate_rhs else a.data + b.data
        sign = -1.0 if negate_rhs else 1.0

        def bw(g):
            return [(a, g), (b, sign * g)]
        return _make("add", data, (a, b), bw)
    if b.data.size == 1:
        bval = b.data.reshape(())
        data = a.data - bval if negate_rhs else a.data + bval
        sign = -1.0 if negate_rhs else 1.0

        def bw_scalar(g):
            return [(a, g), (b, np.asarray(sign * g.sum()).reshape(b.data.shape))]
        return _make("add", data, (a, b), bw_scalar)
    if a.data.size == 1:
        return add(b, a) if not negate_rhs else add(scale(b, -1.0), a)
    raise ShapeError(f"add: shapes {a.data.shape} vs {b.data.shape}")


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        return add(a, b, negate_rhs=True)
    return add(a, -b)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a (D,) vector to every row of (N, D) x.

    Composed from matmul/reshape/add, so no op here broadcasts implicitly.
    """
    if x.data.ndim != 2 or b.data.ndim != 1 or x.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"bias_add: {x.data.shape} + {b.data.shape}")
    n, d = x.data.shape
    ones_col = tensor(np.ones((n, 1)), dtype=x.data.dtype)
    return add(x, matmul(ones_col, reshape(b, (1, d))))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise multiply; b may be a same-shape tensor, scalar tensor, or float."""
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    if not isinstance(b, Tensor):
        raise TypeError("mul: rhs must be Tensor or float")
    if b.data.shape == a.data.shape:
        def bw(g):
            return [(a, g * b.data), (b, g * a.data)]
        return _make("mul", a.data * b.data, (a, b), bw)
    if b.data.size == 1:
        bval = b.data.reshape(())

        def bw_scalar(g):
            return [(a, g * bval), (b, np.asarray((g * a.data).sum()).reshape(b.data.shape))]
        return _make("mul", a.data * bval, (a, b), bw_scalar)
    if a.data.size == 1:
        return mul(b, a)
    raise ShapeError(f"mul: shapes {a.data.shape} vs {b.data.shape}")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make("scale", a.data * s, (a,), lambda g: [(a, g * s)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D/1-D operands (vector = 1-D, no implicit batch)."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def bw(g):
            return [(a, g @ bd.T), (b, ad.T @ g)]
        return _make("matmul", ad @ bd, (a, b), bw)
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def bw_mv(g):
            return [(a, np.outer(g, bd)), (b, ad.T @ g)]
        return _make("matmul", ad @ bd, (a, b), bw_mv)
    if ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def bw_vm(g):
            return [(a, bd @ g), (b, np.outer(ad, g))]
        return _make("matmul", ad @ bd, (a, b), bw_vm)
    if ad.ndim == 1 and bd.ndim == 1:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def bw_vv(g):
            return [(a, g * bd), (b, g * ad)]
        return _make("matmul", ad @ bd, (a, b), bw_vv)
    raise ShapeError(f"matmul: unsupported ranks {ad.ndim} and {bd.ndim}")


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(range(a.data.ndim))[::-1]
    inv = np.argsort(axes)
    return _make("transpose", a.data.transpose(axes), (a,),
                 lambda g: [(a, g.transpose(inv))])


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.data.shape
    return _make("reshape", a.data.reshape(shape), (a,),
                 lambda g: [(a, g.reshape(orig))])


def concat(parts, axis=0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no tensors")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        pieces = np.split(g, splits, axis=axis)
        return list(zip(parts, pieces))
    return _make("concat", np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def slice_(a: Tensor, key) -> Tensor:
    """Basic (non-fancy) slicing; backward scatters into a zero tensor."""
    data = a.data[key]

    def bw(g):
        buf = np.zeros_like(a.data)
        buf[key] += g
        return [(a, buf)]
    return _make("slice", data, (a,), bw)


def sum_(a: Tensor, axis=None) -> Tensor:
    def bw(g):
        if axis is None:
            return [(a, np.broadcast_to(g, a.data.shape).copy())]
        return [(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())]
    return _make("sum", a.data.sum(axis=axis), (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum_(a, axis=axis), 1.0 / float(n))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make("relu", a.data * mask, (a,), lambda g: [(a, g * mask)])


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return [(a, g * out * (1.0 - out))]
    return _make("sigmoid", out, (a,), bw)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def bw(g):
        return [(a, g * out)]
    return _make("exp", out, (a,), bw)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NonFiniteError("log: non-positive input")
    return _make("log", np.log(a.data), (a,), lambda g: [(a, g / a.data)])


def reciprocal(a: Tensor) -> Tensor:
    if np.any(a.data == 0):
        raise NonFiniteError("reciprocal: zero input")
    out = 1.0 / a.data

    def bw(g):
        return [(a, -g * out * out)]
    return _make("reciprocal", out, (a,), bw)


def softmax(a: Tensor, axis=-1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return [(a, out * (g - dot))]
    return _make("softmax", out, (a,), bw)


def log_softmax(a: Tensor, axis=-1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return [(a, g - soft * g.sum(axis=axis, keepdims=True))]
    return _make("log_softmax", out, (a,), bw)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and bias."""
    d = a.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},)")
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(a.data.ndim - 1))
        return [(a, dx), (gain, (g * xhat).sum(axis=axes)), (bias, g.sum(axis=axes))]
    return _make("layer_norm", out, (a, gain, bias), bw)


def l2_normalize(a: Tensor, axis=-1, min_norm: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit L2 norm; zero-norm slices are an error."""
    norms = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    if np.any(norms < min_norm):
        raise ShapeError("l2_normalize: zero-norm slice")
    out = a.data / norms

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return [(a, (g - out * dot) / norms)]
    return _make("l2_normalize", out, (a,), bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError("embedding_lookup: ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(f"embedding_lookup: id out of range for table {table.data.shape}")

    def bw(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        return [(table, buf)]
    return _make("embedding_lookup", table.data[ids], (table,), bw)


def conv1d(x: Tensor, w: Tensor, b: Tensor = None) -> Tensor:
    """Same-padded stride-1 convolution over the time axis.

    x: (L, Cin), w: (K, Cin, Cout) with K odd, b: (Cout,) or None -> (L, Cout).
    """
    L, cin = x.data.shape
    K, cin_w, cout = w.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv1d: x channels {cin} != w channels {cin_w}")
    if K % 2 != 1:
        raise ShapeError("conv1d: kernel width must be odd for same padding")
    pad = K // 2
    xp = np.zeros((L + 2 * pad, cin), dtype=x.data.dtype)
    xp[pad:pad + L] = x.data
    cols = np.stack([xp[k:k + L] for k in range(K)], axis=1)  # (L, K, Cin)
    cols2 = cols.reshape(L, K * cin)
    wmat = w.data.reshape(K * cin, cout)
    out = cols2 @ wmat
    if b is not None:
        out = out + b.data

    def bw(g):
        dw = (cols2.T @ g).reshape(K, cin, cout)
        dcols = (g @ wmat.T).reshape(L, K, cin)
        dxp = np.zeros_like(xp)
        for k in range(K):
            dxp[k:k + L] += dcols[:, k, :]
        grads = [(x, dxp[pad:pad + L]), (w, dw)]
        if b is not None:
            grads.append((b, g.sum(axis=0)))
        return grads
    parents = (x, w) if b is None else (x, w, b)
    return _make("conv1d", out, parents, bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor = None) -> Tensor:
    """Non-overlapping 2x2 stride-2 patch convolution.

    x: (H, W) or (H, W, Cin), w: (2, 2, Cin, Cout), b: (Cout,) -> (H//2, W//2, Cout).
    Trailing odd rows/columns are dropped, so output lengths are floor(H/2), floor(W/2).
    """
    xd = x.data if x.data.ndim == 3 else x.data[:, :, None]
    H, W, cin = xd.shape
    kh, kw, cin_w, cout = w.data.shape
    if (kh, kw) != (2, 2):
        raise ShapeError("conv2d: kernel must be 2x2 (stride 2 patches)")
    if cin != cin_w:
        raise ShapeError(f"conv2d: x channels {cin} != w channels {cin_w}")
    H2, W2 = H // 2, W // 2
    if H2 < 1 or W2 < 1:
        raise ShapeError(f"conv2d: input {xd.shape} too small")
    crop = xd[:H2 * 2, :W2 * 2]
    patches = crop.reshape(H2, 2, W2, 2, cin).transpose(0, 2, 1, 3, 4).reshape(H2, W2, 4 * cin)
    wmat = w.data.reshape(4 * cin, cout)
    out = patches @ wmat
    if b is not None:
        out = out + b.data

    def bw(g):
        dw = (patches.reshape(-1, 4 * cin).T @ g.reshape(-1, cout)).reshape(2, 2, cin, cout)
        dpatch = (g @ wmat.T).reshape(H2, W2, 2, 2, cin).transpose(0, 2, 1, 3, 4)
        dx = np.zeros_like(xd)
        dx[:H2 * 2, :W2 * 2] = dpatch.reshape(H2 * 2, W2 * 2, cin)
        if x.data.ndim == 2:
            dx = dx[:, :, 0]
        grads = [(x, dx), (w, dw)]
        if b is not None:
            grads.append((b, g.sum(axis=(0, 1))))
        return grads
    parents = (x, w) if b is None else (x, w, b)
    return _make("conv2d", out, parents, bw)


def max_pool1d(x: Tensor) -> Tensor:
    """Width-2 stride-2 max pool over the time axis; (L, C) -> (L//2, C)."""
    L, C = x.data.shape
    L2 = L // 2
    if L2 < 1:
        raise ShapeError(f"max_pool1d: input length {L} too short")
    pairs = x.data[:L2 * 2].reshape(L2, 2, C)
    idx = pairs.argmax(axis=1)  # (L2, C), ties -> first
    out = np.take_along_axis(pairs, idx[:, None, :], axis=1)[:, 0, :]

    def bw(g):
        dpairs = np.zeros_like(pairs)
        np.put_along_axis(dpairs, idx[:, None, :], g[:, None, :], axis=1)
        dx = np.zeros_like(x.data)
        dx[:L2 * 2] = dpairs.reshape(L2 * 2, C)
        return [(x, dx)]
    return _make("max_pool1d", out, (x,), bw)


def custom_op(name: str, out_data, parents, backward_fn) -> Tensor:
    """Register a forward value with a hand-written backward rule.

    ``backward_fn(g)`` must return [(parent, grad_contribution), ...].
    Used for ops whose gradient is cheaper analytically than compositionally.
    """
    return _make(name, out_data, tuple(parents), backward_fn)
