"""Dense tensors with reverse-mode autodiff on a numpy backend.

Compute is float32 by default; tests build float64 tensors to get a
64-bit shadow path for finite-difference checks. The tape is rebuilt on
every forward pass (define-by-run) and freed after `backward`.
"""

from __future__ import annotations

import math
import struct
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "no_grad",
    "tensor",
    "zeros",
    "ones",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "softmax",
    "silu",
    "sigmoid",
    "exp",
    "sqrt",
    "relu",
    "reshape",
    "permute",
    "concat",
    "tile",
    "upsample2x",
    "gather",
    "scatter_add",
    "tsum",
    "mean",
    "mse_loss",
    "linear",
    "attention",
    "conv2d",
    "group_norm",
    "layer_norm",
    "adam_step",
    "save_tnsr",
    "load_tnsr",
]


class NonFiniteError(FloatingPointError):
    """Raised when a forward op produces NaN or Inf from finite inputs."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction (inference / optimizer internals)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32, copy=False)


def _check_finite(arr, op):
    # One cheap reduction; activations at this scale never overflow a
    # finite float64 sum unless the array already holds NaN/Inf.
    s = float(np.sum(arr, dtype=np.float64))
    if not math.isfinite(s):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """N-d float array plus optional gradient buffer and tape hooks."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection ------------------------------------------------

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

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    # -- autograd -----------------------------------------------------------

    def _accumulate(self, g):
        # Grads are stored on leaves only (parameters / explicit inputs).
        if not self.requires_grad or self._backward is not None:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)

        topo: list[Tensor] = []
        seen = set()

        def visit(t):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    topo.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))

        visit(self)

        grads = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                if not (p.requires_grad or p._backward is not None):
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return tslice(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def permute(self, *axes):
        return permute(self, axes if len(axes) > 1 else axes[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=np.float32, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad=False):
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, backward, op, check=True):
    # Structural ops (reshape/permute/...) cannot create non-finite values
    # from finite inputs, so they pass check=False to skip the scan.
    if check:
        _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    track = _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents)
    out.requires_grad = False
    if track:
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = any(p.requires_grad for p in parents)
    return out


def _unbroadcast(g, shape):
    """Sum grad `g` down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a = a if isinstance(a, Tensor) else _wrap(a, getattr(b, "dtype", np.float32))
    b = _wrap(b, a.dtype)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), backward, "add")


def sub(a, b):
    a = a if isinstance(a, Tensor) else _wrap(a, getattr(b, "dtype", np.float32))
    b = _wrap(b, a.dtype)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), backward, "sub")


def mul(a, b):
    a = a if isinstance(a, Tensor) else _wrap(a, getattr(b, "dtype", np.float32))
    b = _wrap(b, a.dtype)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(out, (a, b), backward, "mul")


def div(a, b):
    a = a if isinstance(a, Tensor) else _wrap(a, getattr(b, "dtype", np.float32))
    b = _wrap(b, a.dtype)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _node(out, (a, b), backward, "div")


def exp(x):
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _node(out, (x,), backward, "exp")


def sqrt(x):
    out = np.sqrt(x.data)

    def backward(g):
        return (g * (0.5 / out),)

    return _node(out, (x,), backward, "sqrt")


def sigmoid(x):
    out = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _node(out, (x,), backward, "sigmoid")


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = x.data * s

    def backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return _node(out, (x,), backward, "silu")


def relu(x):
    out = np.maximum(x.data, 0.0)

    def backward(g):
        return (g * (x.data > 0),)

    return _node(out, (x,), backward, "relu")


# -- shape ops ----------------------------------------------------------------


def reshape(x, shape):
    old = x.data.shape
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(old),)

    return _node(out, (x,), backward, "reshape", check=False)


def permute(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def backward(g):
        return (g.transpose(inv),)

    return _node(out, (x,), backward, "permute", check=False)


def tslice(x, idx):
    out = x.data[idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _node(out, (x,), backward, "slice", check=False)


def concat(tensors, axis=0):
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(tensors), backward, "concat", check=False)


def tile(x, reps):
    reps = tuple(reps)
    if len(reps) != x.data.ndim:
        raise ValueError("tile expects one repetition count per axis")
    out = np.tile(x.data, reps)

    def backward(g):
        g2 = g
        for ax, r in enumerate(reps):
            if r == 1:
                continue
            n = x.data.shape[ax]
            shp = g2.shape[:ax] + (r, n) + g2.shape[ax + 1 :]
            g2 = g2.reshape(shp).sum(axis=ax)
        return (g2,)

    return _node(out, (x,), backward, "tile", check=False)


def upsample2x(x):
    """Nearest-neighbor 2x spatial upsampling for [..., H, W]."""
    out = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)

    def backward(g):
        h, w = x.data.shape[-2], x.data.shape[-1]
        g2 = g.reshape(g.shape[:-2] + (h, 2, w, 2)).sum(axis=(-3, -1))
        return (g2,)

    return _node(out, (x,), backward, "upsample2x", check=False)


def gather(x, indices, axis=0):
    """Take rows/slices of `x` along `axis`; backward scatter-adds."""
    idx = np.asarray(indices)
    out = np.take(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None),) * axis + (idx,), g)
        return (gx,)

    return _node(out, (x,), backward, "gather", check=False)


def scatter_add(x, indices, updates, axis=0):
    """Return a copy of `x` with `updates` added at `indices` along `axis`."""
    idx = np.asarray(indices)
    out = x.data.copy()
    np.add.at(out, (slice(None),) * axis + (idx,), updates.data)

    def backward(g):
        gu = np.take(g, idx, axis=axis)
        return g.copy(), gu

    return _node(out, (x, updates), backward, "scatter_add")


# -- reductions ---------------------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.data.shape).copy(),)

    return _node(np.asarray(out), (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    out = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        n = x.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([x.data.shape[a] for a in axis]))
    else:
        n = x.data.shape[axis]

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / n, x.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / n, x.data.shape).copy(),)

    return _node(np.asarray(out), (x,), backward, "mean")


def mse_loss(pred, target):
    d = pred.data - target.data
    out = np.asarray((d * d).mean(), dtype=pred.data.dtype)
    scale = 2.0 / d.size

    def backward(g):
        gd = g * scale * d
        return gd, -gd

    return _node(out, (pred, target), backward, "mse_loss")


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    out = a.data @ b.data
    need_a, need_b = _needs_grad(a), _needs_grad(b)

    def backward(g):
        ga = gb = None
        if a.data.ndim == 1 and b.data.ndim >= 2:
            if need_a:
                ga = g @ np.swapaxes(b.data, -1, -2)
            if need_b:
                gb = (np.outer(a.data, g) if b.data.ndim == 2
                      else np.einsum("k,...n->...kn", a.data, g))
        elif b.data.ndim == 1 and a.data.ndim >= 2:
            if need_a:
                ga = np.einsum("...m,k->...mk", g, b.data)
            if need_b:
                gb = np.swapaxes(a.data, -1, -2) @ g
        else:
            if need_a:
                ga = g @ np.swapaxes(b.data, -1, -2)
            if need_b:
                gb = np.swapaxes(a.data, -1, -2) @ g
        return (None if ga is None else _unbroadcast(ga, a.data.shape),
                None if gb is None else _unbroadcast(gb, b.data.shape))

    return _node(out, (a, b), backward, "matmul")


def linear(x, w, b=None):
    """x[..., in] @ w[in, out] (+ b[out])."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, b)
    return y


def softmax(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _node(out, (x,), backward, "softmax")


def attention(q, k, v):
    """Softmax(q @ k^T / sqrt(d)) @ v over the last two axes.

    q: [..., L, d], k: [..., S, d], v: [..., S, dv] -> [..., L, dv].
    """
    if k.data.shape[-2] == 0:
        raise ValueError("attention requires at least one key")
    d = q.data.shape[-1]
    scores = div(matmul(q, swap_last(k)), math.sqrt(d))
    return matmul(softmax(scores, axis=-1), v)


def swap_last(x):
    axes = tuple(range(x.data.ndim - 2)) + (x.data.ndim - 1, x.data.ndim - 2)
    return permute(x, axes)


# -- convolution --------------------------------------------------------------


def _conv_geometry(h, w, kh, kw, stride, padding):
    if padding == "same":
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError("kernel larger than padded input")
    return ph, pw, ho, wo


def _needs_grad(t):
    return t.requires_grad or t._backward is not None


def conv2d(x, w, stride=1, padding="same"):
    """2-d convolution (cross-correlation): x[B,C,H,W], w[K,C,kh,kw]."""
    b, c, h, wd = x.data.shape
    k, c2, kh, kw = w.data.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c} vs kernel {c2}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d kernels must have odd extents")
    ph, pw, ho, wo = _conv_geometry(h, wd, kh, kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B,C,ho,wo,kh,kw]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, c * kh * kw)
    wmat = w.data.reshape(k, c * kh * kw)
    out = np.ascontiguousarray((cols @ wmat.T).reshape(b, ho, wo, k).transpose(0, 3, 1, 2))
    need_x, need_w = _needs_grad(x), _needs_grad(w)

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b * ho * wo, k)
        gw = (gmat.T @ cols).reshape(k, c, kh, kw) if need_w else None
        if not need_x:
            return None, gw
        gcols = (gmat @ wmat).reshape(b, ho, wo, c, kh, kw)
        # one contiguous reorder so the offset loop adds contiguous blocks
        gcols = np.ascontiguousarray(gcols.transpose(4, 5, 0, 3, 1, 2))
        gxp = np.zeros((b, c, h + 2 * ph, wd + 2 * pw), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += gcols[i, j]
        gx = gxp[:, :, ph : ph + h, pw : pw + wd] if (ph or pw) else gxp
        return gx, gw

    return _node(out, (x, w), backward, "conv2d")


# -- normalization ------------------------------------------------------------


def group_norm(x, num_groups, gamma, beta, eps=1e-5):
    """GroupNorm over [B,C,H,W]; gamma/beta are [C]. Fused forward/backward."""
    b, c, h, w = x.data.shape
    if c % num_groups:
        raise ValueError(f"channels {c} not divisible by {num_groups} groups")
    xg = x.data.reshape(b, num_groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xn = (xc * inv_std).reshape(b, c, h, w)
    out = xn * gamma.data.reshape(1, c, 1, 1) + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        ggamma = (g * xn).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        dxn = (g * gamma.data.reshape(1, c, 1, 1)).reshape(b, num_groups, -1)
        xng = xn.reshape(b, num_groups, -1)
        m1 = dxn.mean(axis=2, keepdims=True)
        m2 = (dxn * xng).mean(axis=2, keepdims=True)
        gx = (dxn - m1 - xng * m2) * inv_std
        return gx.reshape(b, c, h, w), ggamma, gbeta

    return _node(out, (x, gamma, beta), backward, "group_norm")


def layer_norm(x, gamma, beta, eps=1e-5):
    """LayerNorm over the last axis. Fused forward/backward."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xn = xc * inv_std
    out = xn * gamma.data + beta.data

    def backward(g):
        axes = tuple(range(g.ndim - 1))
        ggamma = (g * xn).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxn = g * gamma.data
        m1 = dxn.mean(axis=-1, keepdims=True)
        m2 = (dxn * xn).mean(axis=-1, keepdims=True)
        gx = (dxn - m1 - xn * m2) * inv_std
        return gx, ggamma, gbeta

    return _node(out, (x, gamma, beta), backward, "layer_norm")


# -- optimizer ----------------------------------------------------------------


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-12):
    """One in-place Adam update on `param.data`; `state` is a mutable dict."""
    if "m" not in state:
        state["m"] = np.zeros_like(param.data)
        state["v"] = np.zeros_like(param.data)
        state["t"] = 0
    state["t"] += 1
    t = state["t"]
    m, v = state["m"], state["v"]
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    param.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(param.data.dtype, copy=False)


# -- TNSR binary format -------------------------------------------------------

_TNSR_MAGIC = b"TNSR1"
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def save_tnsr(path, array):
    """Write `array` (f32/f64) as magic, dtype u8, rank u8, u64 LE extents, payload."""
    arr = np.asarray(array)
    if arr.dtype not in _CODE_FOR:
        raise ValueError(f"TNSR supports float32/float64, got {arr.dtype}")
    code = _CODE_FOR[arr.dtype]
    with open(path, "wb") as f:
        f.write(_TNSR_MAGIC)
        f.write(struct.pack("<BB", code, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[code], copy=False).tobytes())


def load_tnsr(path):
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != _TNSR_MAGIC:
            raise ValueError(f"not a TNSR file: {path}")
        code, rank = struct.unpack("<BB", f.read(2))
        if code not in _DTYPE_CODES:
            raise ValueError(f"unknown TNSR dtype code {code}")
        shape = struct.unpack(f"<{rank}Q", f.read(8 * rank))
        n = int(np.prod(shape)) if rank else 1
        payload = f.read(n * _DTYPE_CODES[code].itemsize)
        arr = np.frombuffer(payload, dtype=_DTYPE_CODES[code]).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)
