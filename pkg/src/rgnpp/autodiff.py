"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Every differentiable quantity in the model flows through `Tensor`. The graph
is a tape of closures built during the forward pass; `backward` walks it in
reverse topological order, accumulates gradients on parameter leaves and then
frees the tape. Parameters live in a `ParamStore` together with their ADAM
moments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class MissingGradientError(RuntimeError):
    pass


class GraphFreedError(RuntimeError):
    pass


_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (eval mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "_freed")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()
        self._freed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    def backward(self):
        if self.data.ndim != 0 and self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._freed:
            raise GraphFreedError("backward called twice on the same graph; re-run the forward pass")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._freed = True
            node._backward = None
            node._parents = ()
            if not node.requires_grad and node is not self:
                node.grad = None


def _tracked(t):
    return t.requires_grad or t._parents or t._backward is not None


def _make(data, parents, backward_factory):
    """Create an op output. backward_factory() -> closure(grad) is only built
    when the tape is active and some parent participates in the graph."""
    out = Tensor(data)
    if _grad_enabled and any(_tracked(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_factory()
    return out


def _accum(t, g):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast")

    def factory():
        def backward(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        return backward

    return _make(data, (a, b), factory)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.data.shape} and {b.data.shape} do not broadcast")

    def factory():
        def backward(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(-g, b.data.shape))
        return backward

    return _make(data, (a, b), factory)


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    ad, bd = a.data, b.data

    def factory():
        def backward(g):
            _accum(a, _unbroadcast(g * bd, ad.shape))
            _accum(b, _unbroadcast(g * ad, bd.shape))
        return backward

    return _make(data, (a, b), factory)


def neg(a):
    a = _coerce(a)

    def factory():
        def backward(g):
            _accum(a, -g)
        return backward

    return _make(-a.data, (a,), factory)


def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} are not conformable")
    data = a.data @ b.data
    ad, bd = a.data, b.data

    def factory():
        def backward(g):
            if ad.ndim == 2 and bd.ndim == 2:
                _accum(a, g @ bd.T)
                _accum(b, ad.T @ g)
            elif ad.ndim == 2 and bd.ndim == 1:
                _accum(a, np.outer(g, bd))
                _accum(b, ad.T @ g)
            elif ad.ndim == 1 and bd.ndim == 2:
                _accum(a, bd @ g)
                _accum(b, np.outer(ad, g))
            else:  # vector dot
                _accum(a, g * bd)
                _accum(b, g * ad)
        return backward

    return _make(data, (a, b), factory)


def concat(tensors, axis=0):
    tensors = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def factory():
        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])
        return backward

    return _make(data, tuple(tensors), factory)


def stack(tensors):
    tensors = [_coerce(t) for t in tensors]
    data = np.stack([t.data for t in tensors])

    def factory():
        def backward(g):
            for i, t in enumerate(tensors):
                _accum(t, g[i])
        return backward

    return _make(data, tuple(tensors), factory)


def slice_(a, key):
    a = _coerce(a)
    data = a.data[key]
    shape = a.data.shape

    def factory():
        def backward(g):
            full = np.zeros(shape)
            full[key] = g
            _accum(a, full)
        return backward

    return _make(data, (a,), factory)


def reshape(a, new_shape):
    a = _coerce(a)
    old = a.data.shape
    data = a.data.reshape(new_shape)

    def factory():
        def backward(g):
            _accum(a, g.reshape(old))
        return backward

    return _make(data, (a,), factory)


def sum_(a, axis=None):
    a = _coerce(a)
    data = a.data.sum(axis=axis)
    shape = a.data.shape

    def factory():
        def backward(g):
            if axis is None:
                _accum(a, np.broadcast_to(g, shape).copy())
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, axis), shape).copy())
        return backward

    return _make(data, (a,), factory)


def mean(a, axis=None):
    a = _coerce(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def sigmoid(a):
    a = _coerce(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def factory():
        y = data

        def backward(g):
            _accum(a, g * y * (1.0 - y))
        return backward

    return _make(data, (a,), factory)


def tanh(a):
    a = _coerce(a)
    data = np.tanh(a.data)

    def factory():
        y = data

        def backward(g):
            _accum(a, g * (1.0 - y * y))
        return backward

    return _make(data, (a,), factory)


def relu(a):
    a = _coerce(a)
    data = np.maximum(a.data, 0.0)
    pos = a.data > 0

    def factory():
        def backward(g):
            _accum(a, g * pos)
        return backward

    return _make(data, (a,), factory)


def leaky_relu(a, slope=0.2):
    a = _coerce(a)
    pos = a.data > 0
    data = np.where(pos, a.data, slope * a.data)

    def factory():
        def backward(g):
            _accum(a, g * np.where(pos, 1.0, slope))
        return backward

    return _make(data, (a,), factory)


def softplus(a):
    a = _coerce(a)
    x = a.data
    # overflow-safe: max(x,0) + log1p(exp(-|x|))
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def factory():
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            _accum(a, g * sig)
        return backward

    return _make(data, (a,), factory)


def exp(a):
    a = _coerce(a)
    data = np.exp(a.data)

    def factory():
        y = data

        def backward(g):
            _accum(a, g * y)
        return backward

    return _make(data, (a,), factory)


def log(a):
    a = _coerce(a)
    data = np.log(a.data)
    x = a.data

    def factory():
        def backward(g):
            _accum(a, g / x)
        return backward

    return _make(data, (a,), factory)


# Counter of log_clamped invocations that hit the subnormal guard.
LOG_CLAMP_COUNTER = {"count": 0}


def log_clamped(a, lo=-745.0):
    """log with the output clamped at `lo` so subnormal intensities cannot
    produce -inf; gradient denominators are floored to stay finite."""
    a = _coerce(a)
    x = a.data
    if np.any(x < 2.3e-308):
        LOG_CLAMP_COUNTER["count"] += int(np.count_nonzero(x < 2.3e-308))
    data = np.maximum(np.log(np.maximum(x, 5e-324)), lo)

    def factory():
        denom = np.maximum(x, 1e-300)

        def backward(g):
            _accum(a, g / denom)
        return backward

    return _make(data, (a,), factory)


def softmax(a, axis=-1):
    a = _coerce(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def factory():
        y = data

        def backward(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            _accum(a, y * (g - dot))
        return backward

    return _make(data, (a,), factory)


def log_softmax(a, axis=-1):
    a = _coerce(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def factory():
        soft = np.exp(data)

        def backward(g):
            _accum(a, g - soft * g.sum(axis=axis, keepdims=True))
        return backward

    return _make(data, (a,), factory)


def layer_norm(a, axis=-1, eps=1e-5):
    a = _coerce(a)
    x = a.data
    mu = x.mean(axis=axis, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    data = xc * inv
    n = x.shape[axis]

    def factory():
        y = data

        def backward(g):
            gm = g.mean(axis=axis, keepdims=True)
            gym = (g * y).mean(axis=axis, keepdims=True)
            _accum(a, inv * (g - gm - y * gym))
        return backward

    return _make(data, (a,), factory)


def dropout(a, p, train, rng=None):
    a = _coerce(a)
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        rng = np.random.default_rng()
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    data = a.data * mask

    def factory():
        def backward(g):
            _accum(a, g * mask)
        return backward

    return _make(data, (a,), factory)


def l2_diff(a, b):
    """Sum of squared differences."""
    d = sub(a, b)
    return sum_(mul(d, d))


# ---------------------------------------------------------------------------
# Parameters and ADAM


class ParamStore:
    """Named parameter registry with per-parameter ADAM moments and a step
    count shared across all parameters."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name, data):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def fill_missing_grads(self):
        """Parameters untouched by the last backward get a zero gradient.
        Legitimate under event-type routing: an unobserved type's LSTM sees
        no data in a chunk."""
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def num_scalars(self):
        return sum(t.data.size for t in self.params.values())


def global_grad_norm(store):
    total = 0.0
    for t in store.params.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return math.sqrt(total)


def clip_grad_norm(store, max_norm):
    norm = global_grad_norm(store)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for t in store.params.values():
            if t.grad is not None:
                t.grad *= scale
    return norm


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected ADAM update over every parameter; gradients are
    consumed (reset to None)."""
    for name, t in store.params.items():
        if t.grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
    store.step_count += 1
    k = store.step_count
    bc1 = 1.0 - beta1 ** k
    bc2 = 1.0 - beta2 ** k
    for name, t in store.params.items():
        g = t.grad
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        t.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        t.grad = None


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    per_param_max_rel_err: dict = field(default_factory=dict)
    global_max_rel_err: float = 0.0
    tolerance: float = 1e-5
    nondeterministic: bool = False
    coords_checked: int = 0

    @property
    def passed(self):
        return (not self.nondeterministic) and self.global_max_rel_err < self.tolerance


def _rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def grad_check(closure, store, h=1e-6, tol=1e-5, num_coords=100, rng=None):
    """Compare backward gradients of `closure() -> scalar Tensor` against
    central finite differences on a sampled subset of coordinates."""
    if rng is None:
        rng = np.random.default_rng(0)
    report = GradCheckReport(tolerance=tol)

    v1 = closure().item()
    v2 = closure().item()
    if v1 != v2:
        report.nondeterministic = True
        return report

    store.zero_grads()
    loss = closure()
    loss.backward()
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
             for name, t in store.params.items()}
    store.zero_grads()

    names = store.names()
    sizes = np.array([store[n].data.size for n in names])
    total = int(sizes.sum())
    n_check = min(num_coords, total)
    flat_ids = rng.choice(total, size=n_check, replace=False)
    bounds = np.cumsum(sizes)

    for fid in flat_ids:
        pi = int(np.searchsorted(bounds, fid, side="right"))
        name = names[pi]
        offset = int(fid - (bounds[pi - 1] if pi > 0 else 0))
        flat = store[name].data.reshape(-1)
        orig = flat[offset]
        flat[offset] = orig + h
        fp = closure().item()
        flat[offset] = orig - h
        fm = closure().item()
        flat[offset] = orig
        fd = (fp - fm) / (2.0 * h)
        err = _rel_err(fd, grads[name].reshape(-1)[offset])
        report.per_param_max_rel_err[name] = max(report.per_param_max_rel_err.get(name, 0.0), err)
        report.global_max_rel_err = max(report.global_max_rel_err, err)

    report.coords_checked = n_check
    return report


# ---------------------------------------------------------------------------
# Checkpoint I/O


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path, config, store):
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config,
        "params": {name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
                   for name, t in store.params.items()},
        "adam": {
            "step": store.step_count,
            "m": {name: store.m[name].reshape(-1).tolist() for name in store.params},
            "v": {name: store.v[name].reshape(-1).tolist() for name in store.params},
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    """Returns (config, ParamStore). Shape validation against the config is
    done by the model builder; this validates internal consistency."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    store = ParamStore()
    for name, spec in doc["params"].items():
        shape = tuple(spec["shape"])
        data = np.asarray(spec["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"checkpoint parameter {name!r}: data length {data.size} != shape {shape}")
        store.add(name, data.reshape(shape))
    adam = doc.get("adam", {})
    store.step_count = int(adam.get("step", 0))
    for name in store.params:
        if name in adam.get("m", {}):
            store.m[name] = np.asarray(adam["m"][name], dtype=np.float64).reshape(store[name].data.shape)
        if name in adam.get("v", {}):
            store.v[name] = np.asarray(adam["v"][name], dtype=np.float64).reshape(store[name].data.shape)
    return doc["config"], store
