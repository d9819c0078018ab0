"""Small module system over the autodiff tensors.

Modules own named Parameters; names are attribute paths joined with dots
and feed the per-stage freeze masks of the training scheduler.
"""

from __future__ import annotations

import fnmatch

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "Parameter",
    "Module",
    "ModuleList",
    "Linear",
    "Conv2d",
    "GroupNorm",
    "LayerNorm",
    "Embedding",
    "Adam",
]


class Parameter:
    """A learnable tensor with a stable name path and a trainable flag."""

    def __init__(self, data, trainable=True):
        self.tensor = Tensor(data, requires_grad=trainable)
        self.name = ""  # assigned when the owning model is finalized
        self.trainable = trainable

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        self.tensor.data = np.asarray(value, dtype=self.tensor.data.dtype)

    @property
    def grad(self):
        return self.tensor.grad

    def set_trainable(self, flag):
        self.trainable = bool(flag)
        self.tensor.requires_grad = self.trainable
        if not flag:
            self.tensor.grad = None


class Module:
    """Base class; child modules/parameters are discovered via attributes."""

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix=""):
        out = []
        for key, val in vars(self).items():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(val, Parameter):
                out.append((path, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(path))
            elif isinstance(val, ModuleList):
                for i, sub in enumerate(val):
                    out.extend(sub.named_parameters(f"{path}.{i}"))
        return out

    def finalize_names(self, root=""):
        """Assign canonical dotted names to every parameter; names must be unique."""
        seen = set()
        for name, p in self.named_parameters(root):
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name
        return self

    def state_arrays(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_arrays(self, state, strict=True):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if strict and (missing or extra):
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in state.items():
            if name in params:
                p = params[name]
                if tuple(arr.shape) != tuple(p.data.shape):
                    raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
                p.tensor.data = np.asarray(arr, dtype=p.data.dtype).copy()

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.grad = None


class ModuleList(list):
    """Plain list of modules that participates in parameter discovery."""


def _kaiming(rng, fan_in, shape, dtype=np.float32):
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Linear(Module):
    def __init__(self, rng, in_features, out_features, bias=True, zero_init=False, dtype=np.float32):
        if zero_init:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = _kaiming(rng, in_features, (in_features, out_features), dtype)
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def __call__(self, x):
        return T.linear(x, self.w.tensor, self.b.tensor if self.b is not None else None)


class Conv2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel=3, stride=1, padding="same", bias=True,
                 zero_init=False, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        if zero_init:
            w = np.zeros((out_ch, in_ch, kernel, kernel), dtype=dtype)
        else:
            w = _kaiming(rng, fan_in, (out_ch, in_ch, kernel, kernel), dtype)
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def __call__(self, x):
        y = T.conv2d(x, self.w.tensor, stride=self.stride, padding=self.padding)
        if self.b is not None:
            y = T.add(y, T.reshape(self.b.tensor, (1, -1, 1, 1)))
        return y


class GroupNorm(Module):
    def __init__(self, num_groups, channels, eps=1e-5, dtype=np.float32):
        self.num_groups = num_groups
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def __call__(self, x):
        return T.group_norm(x, self.num_groups, self.gamma.tensor, self.beta.tensor, self.eps)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5, dtype=np.float32):
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))

    def __call__(self, x):
        return T.layer_norm(x, self.gamma.tensor, self.beta.tensor, self.eps)


class Embedding(Module):
    def __init__(self, rng, num_embeddings, dim, dtype=np.float32):
        self.table = Parameter((rng.standard_normal((num_embeddings, dim)) * 0.02).astype(dtype))

    def __call__(self, ids):
        return T.gather(self.table.tensor, np.asarray(ids, dtype=np.int64), axis=0)


class Adam:
    """Adam over a fixed parameter list; skips non-trainable parameters."""

    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-12):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {id(p): {} for p in self.params}

    def step(self):
        for p in self.params:
            if not p.trainable or p.tensor.grad is None:
                continue
            T.adam_step(p.tensor, p.tensor.grad, self.state[id(p)],
                        self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.tensor.grad = None


def match_globs(name, patterns):
    return any(fnmatch.fnmatchcase(name, pat) for pat in patterns)
