"""Dense float64 tensors with reverse-mode automatic differentiation.

Covers exactly the primitives the operator layers need: matmul, broadcast
add/mul, ReLU, reductions, row gather/scatter, and batched mat-vec for
per-edge kernel application.  The tape is the implicit graph of parent
links; backward() walks it in reverse topological order once and then
frees it (no higher-order derivatives).
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "matmul",
    "relu",
    "gather_rows",
    "segment_sum",
    "batched_matvec",
    "Mlp",
    "glorot_uniform",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array node in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward",
                 "_grad_owned")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._grad_owned = False

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self):
        return sum_all(self)

    def backward(self):
        """Backpropagate from a scalar; populates .grad and frees the tape."""
        if self.data.shape != ():
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
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
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if not node.requires_grad:
                node.grad = None
            # free the tape
            node._parents = ()
            node._backward = None


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _needs(t):
    """True when a grad must flow into t (parameter or recorded node)."""
    return t.requires_grad or t._backward is not None


def _accum(node, grad, own=True):
    """Accumulate into node.grad.

    own=True promises `grad` is freshly allocated and may be adopted (and
    later mutated in place); own=False stores it by reference and switches
    to out-of-place accumulation.
    """
    if node.grad is None:
        node.grad = grad
        node._grad_owned = own
    elif node._grad_owned:
        node.grad += grad
    else:
        node.grad = node.grad + grad
        node._grad_owned = True


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if _needs(a):
            r = _unbroadcast(g, a.data.shape)
            _accum(a, r, own=r is not g)
        if _needs(b):
            r = _unbroadcast(g, b.data.shape)
            _accum(b, r, own=r is not g)

    return _make(data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if _needs(a):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if _needs(b):
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: inner extents differ, {a.data.shape} x {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        if _needs(a):
            _accum(a, g @ b.data.T)
        if _needs(b):
            _accum(b, a.data.T @ g)

    return _make(data, (a, b), backward)


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0  # subgradient at 0 is 0
    data = np.where(mask, x.data, 0.0)

    def backward(g):
        _accum(x, g * mask)

    return _make(data, (x,), backward)


def sum_all(x):
    x = _as_tensor(x)
    data = x.data.sum()

    def backward(g):
        _accum(x, np.broadcast_to(g, x.data.shape), own=False)

    return _make(data, (x,), backward)


def reshape(x, shape):
    x = _as_tensor(x)
    data = x.data.reshape(shape)
    old = x.data.shape

    def backward(g):
        r = g.reshape(old)
        _accum(x, r, own=r.base is None and r is not g)

    return _make(data, (x,), backward)


def gather_rows(x, idx):
    """out[e] = x[idx[e]]; scatter-add on the way back."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    data = x.data[idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accum(x, gx)

    return _make(data, (x,), backward)


def segment_sum(x, idx, num_segments):
    """out[idx[e]] += x[e]; gather on the way back.

    Deterministic: np.add.at accumulates sequentially in index order.
    """
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    data = np.zeros((num_segments,) + x.data.shape[1:], dtype=np.float64)
    np.add.at(data, idx, x.data)

    def backward(g):
        _accum(x, g[idx])

    return _make(data, (x,), backward)


def batched_matvec(k, v):
    """out[..., i] = sum_j k[..., i, j] * v[..., j]."""
    k, v = _as_tensor(k), _as_tensor(v)
    if k.data.shape[-1] != v.data.shape[-1]:
        raise ValueError(
            f"batched_matvec: extents differ, {k.data.shape} vs {v.data.shape}"
        )
    data = (k.data @ v.data[..., None])[..., 0]

    def backward(g):
        if _needs(k):
            _accum(k, g[..., None] @ v.data[..., None, :])
        if _needs(v):
            _accum(v, (np.swapaxes(k.data, -1, -2) @ g[..., None])[..., 0])

    return _make(data, (k, v), backward)


def glorot_uniform(rng, fan_in, fan_out):
    """Uniform [-s, s] with s = sqrt(6/(fan_in+fan_out))."""
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


class Mlp:
    """Fully connected net: affine + ReLU on internal layers, identity last."""

    def __init__(self, widths, rng=None, params=None):
        widths = list(widths)
        if len(widths) < 2:
            raise ValueError("Mlp needs at least an input and an output width")
        self.widths = widths
        if params is not None:
            self.weights, self.biases = params
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                if w.data.shape != (widths[i], widths[i + 1]):
                    raise ValueError(
                        f"layer {i}: weight shape {w.data.shape} breaks the "
                        f"width chain {widths}"
                    )
                if b.data.shape != (widths[i + 1],):
                    raise ValueError(
                        f"layer {i}: bias shape {b.data.shape} != ({widths[i + 1]},)"
                    )
        else:
            self.weights = []
            self.biases = []
            for i in range(len(widths) - 1):
                w = Tensor(glorot_uniform(rng, widths[i], widths[i + 1]),
                           requires_grad=True)
                b = Tensor(np.zeros(widths[i + 1]), requires_grad=True)
                self.weights.append(w)
                self.biases.append(b)

    def __call__(self, x):
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if i != last:
                h = relu(h)
        return h

    def parameters(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"w{i}", w))
            out.append((f"b{i}", b))
        return out

    def parameter_count(self):
        return sum(p.data.size for _, p in self.parameters())

    def final_layer_parameter_count(self):
        return self.weights[-1].data.size + self.biases[-1].data.size
