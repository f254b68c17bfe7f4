"""Parameterised building blocks: linear and conv layers, the hourglass
encoder, multi-head attention, the token fusion encoder and the MLP head."""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def __init__(self):
        self._params = OrderedDict()
        self._children = OrderedDict()

    def param(self, name, array):
        t = Tensor(array, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for n, p in self._params.items():
            yield prefix + n, p
        for cn, c in self._children.items():
            yield from c.named_parameters(f"{prefix}{cn}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _uniform(rng, shape, fan_in, dtype, gain=1.0):
    bound = gain * math.sqrt(3.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.W = self.param("W", _uniform(rng, (n_in, n_out), n_in, dtype))
        self.b = self.param("b", np.zeros(n_out, dtype))

    def __call__(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"linear layer expects width {self.n_in}, got {x.shape[-1]}")
        return x @ self.W + self.b


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, dtype, stride=1):
        super().__init__()
        self.stride, self.pad = stride, k // 2
        self.W = self.param("W", _uniform(rng, (c_out, c_in, k, k), c_in * k * k, dtype))
        self.b = self.param("b", np.zeros(c_out, dtype))

    def __call__(self, x):
        return T.conv2d(x, self.W, self.b, self.stride, self.pad)


class Residual(Module):
    def __init__(self, c, rng, dtype):
        super().__init__()
        self.c1 = self.child("c1", Conv2d(c, c, 3, rng, dtype))
        self.c2 = self.child("c2", Conv2d(c, c, 3, rng, dtype))

    def __call__(self, x):
        return x + self.c2(T.silu(self.c1(x)))


class Hourglass(Module):
    """Recursive pool / process / upsample block with a skip branch per level."""

    def __init__(self, c, depth, rng, dtype):
        super().__init__()
        self.depth = depth
        self.up = self.child("up", Residual(c, rng, dtype))
        self.low = self.child("low", Residual(c, rng, dtype))
        if depth > 1:
            self.inner = self.child("inner", Hourglass(c, depth - 1, rng, dtype))
        else:
            self.inner = self.child("inner", Residual(c, rng, dtype))

    def __call__(self, x):
        low = self.inner(self.low(T.avgpool2(x)))
        return self.up(x) + T.upsample2(low)


class Encoder(Module):
    """Strided stem, ``stacks`` hourglass blocks, 1x1 projection to ``out_channels``."""

    def __init__(self, in_channels, cfg, rng, dtype):
        super().__init__()
        self.cfg = cfg
        self.in_channels = in_channels
        n_down = int(round(math.log2(cfg.downsample)))
        c = cfg.hidden
        self.stem = []
        for i in range(max(n_down, 1)):
            stride = 2 if i < n_down else 1
            self.stem.append(self.child(f"stem{i}", Conv2d(in_channels if i == 0 else c, c, 3, rng, dtype, stride)))
        self.stacks = [self.child(f"hg{i}", Hourglass(c, cfg.depth, rng, dtype)) for i in range(cfg.stacks)]
        self.proj = self.child("proj", Conv2d(c, cfg.out_channels, 1, rng, dtype))

    def __call__(self, image):
        x = image if isinstance(image, Tensor) else Tensor(image)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"encoder expects (B, {self.in_channels}, H, W), got {x.shape}")
        s = self.cfg.downsample
        need = s * 2 ** self.cfg.depth
        if x.shape[2] % need or x.shape[3] % need:
            raise ValueError(f"image dims {x.shape[2:]} must be divisible by {need}")
        for conv in self.stem:
            x = T.silu(conv(x))
        for hg in self.stacks:
            x = hg(x)
        return self.proj(x)


def attention(Q, K, V):
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes."""
    Q, K, V = T.as_tensor(Q), T.as_tensor(K), T.as_tensor(V)
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ValueError(f"attention shape mismatch: Q{Q.shape} K{K.shape} V{V.shape}")
    dk = Q.shape[-1]
    axes = tuple(range(K.ndim - 2)) + (K.ndim - 1, K.ndim - 2)
    w = T.softmax(T.scale(Q @ T.transpose(K, axes), 1.0 / math.sqrt(dk)), axis=-1)
    return w @ V


class MultiHead(Module):
    def __init__(self, width, heads, d_k, rng, dtype):
        super().__init__()
        if heads * d_k != width:
            raise ValueError(f"heads * d_k = {heads * d_k} must equal token width {width}")
        self.width, self.heads, self.d_k = width, heads, d_k
        self.q = self.child("q", Linear(width, width, rng, dtype))
        self.k = self.child("k", Linear(width, width, rng, dtype))
        self.v = self.child("v", Linear(width, width, rng, dtype))
        self.o = self.child("o", Linear(width, width, rng, dtype))

    def _split(self, x):
        n, t, _ = x.shape
        return T.transpose(T.reshape(x, (n, t, self.heads, self.d_k)), (0, 2, 1, 3))

    def __call__(self, tokens):
        """tokens: (N, T, width) -> (N, T, width)."""
        if tokens.shape[-1] != self.width:
            raise ValueError(f"token width {tokens.shape[-1]} != {self.width}")
        n, t, _ = tokens.shape
        h = attention(self._split(self.q(tokens)), self._split(self.k(tokens)), self._split(self.v(tokens)))
        h = T.reshape(T.transpose(h, (0, 2, 1, 3)), (n, t, self.width))
        return self.o(h)


class FusionEncoder(Module):
    """Attention over the token sequence, a residual feed-forward block, then
    the mean over tokens."""

    def __init__(self, width, heads, d_k, rng, dtype, ffn_mult=2):
        super().__init__()
        self.mha = self.child("mha", MultiHead(width, heads, d_k, rng, dtype))
        self.ff1 = self.child("ff1", Linear(width, ffn_mult * width, rng, dtype))
        self.ff2 = self.child("ff2", Linear(ffn_mult * width, width, rng, dtype))

    def __call__(self, tokens):
        y = self.mha(tokens)
        z = y + self.ff2(T.silu(self.ff1(y)))
        return T.mean(z, axis=1)


class Head(Module):
    """MLP whose layers listed in ``skips`` also see the raw input; sigmoid output."""

    def __init__(self, widths, skips, rng, dtype):
        super().__init__()
        self.widths, self.skips = tuple(widths), tuple(skips)
        if self.widths[-1] != 1:
            raise ValueError("last head width must be 1")
        self.layers = []
        for i in range(len(widths) - 1):
            n_in = widths[i] + (widths[0] if i in self.skips and i > 0 else 0)
            self.layers.append(self.child(f"l{i}", Linear(n_in, widths[i + 1], rng, dtype)))

    def __call__(self, x):
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"head expects width {self.widths[0]}, got {x.shape[-1]}")
        y = x
        for i, lin in enumerate(self.layers):
            inp = T.concat([y, x], axis=-1) if i in self.skips and i > 0 else y
            y = lin(inp)
            if i < len(self.layers) - 1:
                y = T.silu(y)
        return T.sigmoid(T.reshape(y, (y.shape[0],)))
