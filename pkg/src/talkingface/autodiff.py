"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-based engine in the micrograd style, generalized to
multi-dimensional arrays: every traced operation records its parent tensors
and a closure that routes the output gradient back to them.  Training code
builds a scalar loss out of these ops, calls ``backward(loss)``, and reads
``.grad`` off the leaves.  Everything runs in float64 on the CPU.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 numpy array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def parameter(data, rng=None, shape=None, scale=None):
    """Create a trainable leaf tensor.

    Either pass an explicit array, or pass ``rng``/``shape``/``scale`` to draw
    a zero-mean normal initialization from the run's generator.
    """
    if data is None:
        data = rng.normal(0.0, scale, size=shape)
    return Tensor(data, requires_grad=True)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` over the axes that numpy broadcast to produce it."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(
            f"{op}: operands with shapes {a.data.shape} and {b.data.shape} "
            "are not broadcastable"
        ) from None


def backward(root: Tensor):
    """Accumulate gradients of a scalar `root` into every reachable leaf."""
    if root.data.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {root.data.shape}")
    order = _toposort(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._grad_fn is None:
            continue
        grads = node._grad_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    data = a.data + b.data

    def grad_fn(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), grad_fn)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    data = a.data - b.data

    def grad_fn(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), grad_fn)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    data = a.data * b.data

    def grad_fn(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), grad_fn)


def div(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")
    data = a.data / b.data

    def grad_fn(g):
        ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _make(data, (a, b), grad_fn)


def neg(a):
    a = _lift(a)

    def grad_fn(g):
        return (-g,)

    return _make(-a.data, (a,), grad_fn)


def power(a, exponent):
    """Elementwise power with a constant (non-tensor) exponent."""
    a = _lift(a)
    if isinstance(exponent, Tensor):
        raise TypeError("power: exponent must be a python scalar, not a Tensor")
    c = float(exponent)
    data = a.data ** c

    def grad_fn(g):
        return (g * c * a.data ** (c - 1.0),)

    return _make(data, (a,), grad_fn)


def exp(a):
    a = _lift(a)
    data = np.exp(a.data)

    def grad_fn(g):
        return (g * data,)

    return _make(data, (a,), grad_fn)


def log(a):
    a = _lift(a)
    data = np.log(a.data)

    def grad_fn(g):
        return (g / a.data,)

    return _make(data, (a,), grad_fn)


def absolute(a):
    """Elementwise |x|; the subgradient at 0 is 0."""
    a = _lift(a)
    data = np.abs(a.data)

    def grad_fn(g):
        return (g * np.sign(a.data),)

    return _make(data, (a,), grad_fn)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a):
    a = _lift(a)
    data = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - data * data),)

    return _make(data, (a,), grad_fn)


def sigmoid(a):
    a = _lift(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def grad_fn(g):
        return (g * data * (1.0 - data),)

    return _make(data, (a,), grad_fn)


def relu(a):
    """max(x, 0); the subgradient at exactly 0 is defined as 0."""
    a = _lift(a)
    data = np.where(a.data > 0, a.data, 0.0)

    def grad_fn(g):
        return (g * (a.data > 0),)

    return _make(data, (a,), grad_fn)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    a = _lift(a)
    data = a.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(a.data.shape),)

    return _make(data, (a,), grad_fn)


def transpose(a, axes=None):
    a = _lift(a)
    data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def grad_fn(g):
        return (np.transpose(g, inv),)

    return _make(data, (a,), grad_fn)


def getitem(a, key):
    a = _lift(a)
    data = a.data[key]

    def grad_fn(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(data, (a,), grad_fn)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for t, p in zip(tensors, pieces))

    return _make(data, tuple(tensors), grad_fn)


# ---------------------------------------------------------------------------
# reductions


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def tensor_sum(a, axis=None, keepdims=False):
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        return (_expand_reduced(g, a.data.shape, axis, keepdims),)

    return _make(data, (a,), grad_fn)


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if data.size == 0 else a.data.size // max(data.size, 1)

    def grad_fn(g):
        return (_expand_reduced(g, a.data.shape, axis, keepdims) / count,)

    return _make(data, (a,), grad_fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(
            f"matmul: operands must have ndim >= 2, got {a.data.ndim} and {b.data.ndim}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul: inner dimensions disagree, {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def grad_fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(data, (a, b), grad_fn)


# ---------------------------------------------------------------------------
# masking and softmax


def masked_fill(a, mask, value):
    """Replace entries where `mask` is true with a constant; their grad is 0."""
    a = _lift(a)
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, float(value), a.data)

    def grad_fn(g):
        return (g * ~np.broadcast_to(mask, a.data.shape),)

    return _make(data, (a,), grad_fn)


def masked_softmax(a, allowed=None):
    """Row softmax over the last axis, restricted to `allowed` entries.

    Entries where `allowed` is false are excluded from the normalization and
    get weight exactly 0 (not a large-negative approximation), so they carry
    no numerical influence whatsoever.  Every row must keep at least one
    allowed entry.
    """
    a = _lift(a)
    x = a.data
    if allowed is None:
        allowed_full = np.ones(x.shape, dtype=bool)
    else:
        allowed_full = np.broadcast_to(np.asarray(allowed, dtype=bool), x.shape)
    if not allowed_full.any(axis=-1).all():
        raise ValueError("masked_softmax: some row has no allowed entries")
    shifted = np.where(allowed_full, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(np.where(allowed_full, shifted, -np.inf))
    data = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - inner),)

    return _make(data, (a,), grad_fn)


def softmax(a):
    return masked_softmax(a, None)


# ---------------------------------------------------------------------------
# normalization


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis to zero mean / unit variance, then scale."""
    x = _lift(x)
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    y = mul(centered, inv)
    if gain is not None:
        y = mul(y, gain)
    if bias is not None:
        y = add(y, bias)
    return y


# ---------------------------------------------------------------------------
# image ops


def conv2d(x, w, b=None, stride=1, padding=0):
    """2D convolution (really cross-correlation) over NCHW inputs.

    x: (B, C, H, W); w: (O, C, kh, kw); b: (O,) or None.  `stride` applies to
    both spatial axes; `padding` zero-pads both borders.
    """
    x, w = _lift(x), _lift(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(
            f"conv2d: expected 4D input and kernel, got {x.data.shape} and {w.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.data.shape[1]} channels but kernel expects {w.data.shape[1]}"
        )
    stride = int(stride)
    padding = int(padding)
    bsz, cin, h, wd = x.data.shape
    cout, _, kh, kw = w.data.shape
    hp, wp = h + 2 * padding, wd + 2 * padding
    if hp < kh or wp < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data

    # im2col: one BLAS matmul instead of a python loop of contractions
    offsets = [(i, j) for i in range(kh) for j in range(kw)]
    cols = np.empty((bsz, cin * kh * kw, oh * ow))
    for idx, (i, j) in enumerate(offsets):
        patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
        cols[:, idx * cin : (idx + 1) * cin] = patch.reshape(bsz, cin, -1)
    w_flat = np.concatenate([w.data[:, :, i, j] for i, j in offsets], axis=1)
    out = np.matmul(w_flat[None], cols).reshape(bsz, cout, oh, ow)
    parents = [x, w]
    if b is not None:
        b = _lift(b)
        out = out + b.data[None, :, None, None]
        parents.append(b)

    def grad_fn(g):
        gx = gw = gb = None
        g_flat = g.reshape(bsz, cout, oh * ow)
        if x.requires_grad:
            gcols = np.matmul(w_flat.T[None], g_flat)
            gxp = np.zeros_like(xp)
            for idx, (i, j) in enumerate(offsets):
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                    gcols[:, idx * cin : (idx + 1) * cin].reshape(bsz, cin, oh, ow)
                )
            gx = gxp[:, :, padding : padding + h, padding : padding + wd] if padding else gxp
        if w.requires_grad:
            gw_flat = np.matmul(g_flat, cols.transpose(0, 2, 1)).sum(axis=0)
            gw = np.empty_like(w.data)
            for idx, (i, j) in enumerate(offsets):
                gw[:, :, i, j] = gw_flat[:, idx * cin : (idx + 1) * cin]
        grads = [gx, gw]
        if b is not None:
            gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
            grads.append(gb)
        return tuple(grads)

    return _make(out, tuple(parents), grad_fn)


def upsample2x(x):
    """Nearest-neighbor 2x spatial upsampling of an NCHW tensor."""
    x = _lift(x)
    if x.data.ndim != 4:
        raise ValueError(f"upsample2x: expected 4D input, got shape {x.data.shape}")
    data = x.data.repeat(2, axis=2).repeat(2, axis=3)
    bsz, c, h, w = x.data.shape

    def grad_fn(g):
        return (g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _make(data, (x,), grad_fn)


# ---------------------------------------------------------------------------
# optimizer


def adam_step(param, grad, m, v, step, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction.

    `step` is 1-based (the value after incrementing the counter).  Returns the
    new (param, m, v) arrays; inputs are not mutated.
    """
    if param.shape != grad.shape:
        raise ValueError(
            f"adam_step: parameter shape {param.shape} != gradient shape {grad.shape}"
        )
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Adam over a list of parameter tensors, with per-run deterministic state."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self._m[i], self._v[i] = adam_step(
                p.data,
                p.grad,
                self._m[i],
                self._v[i],
                self.step_count,
                lr=self.lr,
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.eps,
            )
