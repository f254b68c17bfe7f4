"""Minimal reverse-mode autodiff over numpy arrays.

Every op returns a new :class:`Tensor` holding its value, its parents and a
closure mapping the output gradient to one gradient per parent.  Graphs are
only recorded while gradients are enabled (see :class:`no_grad`).
"""
from __future__ import annotations

import numpy as np

from .. import accel
from . import _kernels

_GRAD = [True]


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        self._prev = _GRAD[0]
        _GRAD[0] = False

    def __exit__(self, *exc):
        _GRAD[0] = self._prev


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        self.grad = None
        self.parents = ()
        self.backward_fn = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{', grad' if self.requires_grad else ''})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires grad."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topo(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, gp in zip(node.parents, node.backward_fn(g)):
                if gp is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = gp if k not in grads else grads[k] + gp

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(as_tensor(o, self.dtype)))

    def __rsub__(self, o):
        return add(as_tensor(o, self.dtype), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __truediv__(self, scalar):
        return scale(self, 1.0 / scalar)

    def __getitem__(self, key):
        return getitem(self, key)


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _out(data, parents, fn):
    t = Tensor(data)
    if _GRAD[0] and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t.parents = parents
        t.backward_fn = fn
    return t


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b, a.dtype if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return _out(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    return _out(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape
    return _out(a.data * b.data, (a, b),
                lambda g: (_unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)))


def scale(a, s):
    s = a.data.dtype.type(s)
    return _out(a.data * s, (a,), lambda g: (g * s,))


def square(a):
    return _out(a.data * a.data, (a,), lambda g: (2 * a.data * g,))


def _logistic(x):
    e = np.exp(-np.abs(x))     # never overflows
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid(a):
    # keep the output strictly inside (0, 1); it rounds to 1.0 for x > ~37 in
    # double precision (~17 in single)
    fi = np.finfo(a.data.dtype)
    y = np.clip(_logistic(a.data), fi.tiny, 1 - fi.epsneg)
    return _out(y, (a,), lambda g: (g * y * (1 - y),))


def silu(a):
    s = _logistic(a.data)
    y = a.data * s
    return _out(y, (a,), lambda g: (g * (s + y * (1 - s)),))


def softmax(a, axis=-1):
    e = np.exp(a.data - a.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _out(y, (a,), fn)


# -- reductions and shape ops ------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _out(a.data.sum(axis=axis, keepdims=keepdims), (a,), fn)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[x] for x in np.atleast_1d(axis)])
    return scale(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    old = a.shape
    return _out(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return _out(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(ts, axis=-1):
    ts = [as_tensor(t) for t in ts]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]
    return _out(np.concatenate([t.data for t in ts], axis=axis), tuple(ts),
                lambda g: tuple(np.split(g, cuts, axis=axis)))


def getitem(a, key):
    shape, dt = a.shape, a.dtype

    def fn(g):
        out = np.zeros(shape, dt)
        out[key] = g
        return (out,)

    return _out(a.data[key], (a,), fn)


def stack_tokens(ts):
    """Stack (N, D) tensors into an (N, T, D) token sequence."""
    return concat([reshape(t, (t.shape[0], 1, t.shape[1])) for t in ts], axis=1)


# -- linear algebra ------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, sa), _unbroadcast(gb, sb)

    return _out(_matmul_rows(a.data, b.data), (a, b), fn)


def _matmul_rows(x, y):
    """Single-precision products accumulate in double and round once, so a
    row's result does not depend on how many rows share the call (BLAS picks
    different kernels and blockings by shape)."""
    if x.dtype == np.float32 and y.dtype == np.float32:
        return (x.astype(np.float64) @ y.astype(np.float64)).astype(np.float32)
    return x @ y


# -- image ops ------------------------------------------------------------------------------

def _im2col(xp, k, stride, ho, wo):
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]          # (B, C, Ho, Wo, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(xp.shape[0], ho * wo, -1)


def conv2d(x, w, b=None, stride=1, pad=0):
    """x: (B, C, H, W); w: (O, C, k, k); b: (O,)."""
    B, C, H, W = x.shape
    O, C2, k, _ = w.shape
    if C != C2:
        raise ValueError(f"conv2d expects {C2} input channels, got {C}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    cols = _im2col(xp, k, stride, ho, wo)                         # (B, Ho*Wo, C*k*k)
    wm = w.data.reshape(O, -1)
    out = cols @ wm.T
    if b is not None:
        out = out + b.data
    y = out.transpose(0, 2, 1).reshape(B, O, ho, wo)
    parents = (x, w) if b is None else (x, w, b)

    def fn(g):
        gm = g.reshape(B, O, ho * wo).transpose(0, 2, 1)            # (B, Ho*Wo, O)
        gw = np.einsum("bpo,bpc->oc", gm, cols).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gcols = (gm @ wm).reshape(B, ho, wo, C, k, k)
            gxp = np.zeros(xp.shape, x.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad:pad + H, pad:pad + W] if pad else gxp
        if b is None:
            return gx, gw
        return gx, gw, gm.sum(axis=(0, 1))

    return _out(y, parents, fn)


def avgpool2(x):
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError("avgpool2 needs even spatial dims")
    y = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def fn(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * x.dtype.type(0.25),)

    return _out(y, (x,), fn)


def upsample2(x):
    B, C, H, W = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    return _out(y, (x,), lambda g: (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),))


def bilinear_weights(fu, fv, h, w):
    """Corner indices and weights for sampling an (h, w) grid at continuous
    coordinates (fu = column, fv = row, node centres at integers).

    Coordinates are clamped to the grid; callers zero out-of-image samples.
    """
    fu = np.clip(fu, 0.0, w - 1.0)
    fv = np.clip(fv, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(fu).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(fv).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = fu - x0
    ay = fv - y0
    idx = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], 1)
    wts = np.stack([(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay], 1)
    return idx, wts


def bilinear_sample(feat, fu, fv, valid):
    """Sample a (F, h, w) feature map at N points -> (N, F); rows with
    ``valid`` False are zero."""
    F, h, w = feat.shape
    idx, wts = bilinear_weights(fu, fv, h, w)
    wts = (wts * valid[:, None]).astype(feat.dtype)
    flat = feat.data.reshape(F, h * w)
    y = np.einsum("fnk,nk->nf", flat[:, idx], wts)

    def fn(g):
        gf = np.zeros((h * w, F), feat.dtype)
        kern = _kernels.scatter_rows if accel.USE_NUMBA else _kernels.scatter_rows_np
        kern(gf, idx, wts, np.ascontiguousarray(g))
        return (gf.T.reshape(F, h, w),)

    return _out(y, (feat,), fn)


# -- losses ----------------------------------------------------------------------------

def mse(pred, target):
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"prediction/label count mismatch: {pred.shape} vs {t.shape}")
    return mean(square(pred - Tensor(t)))
