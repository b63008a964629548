"""Reverse-mode automatic differentiation on numpy arrays.

A small tape: every operation builds a `Node` holding the forward value
plus one vector-Jacobian closure per input. `backward()` walks the graph
once in reverse topological order and accumulates gradients into the leaf
nodes. Only the operations needed by the MLP losses in this package are
provided; everything runs in float64.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    """One traced value: forward result plus links back to its inputs."""

    __slots__ = ("value", "grad", "parents", "vjps")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        vjps: Sequence[Callable[[Array], Array]] = (),
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.parents = tuple(parents)
        self.vjps = tuple(vjps)

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        o = as_node(other)
        return Node(
            self.value + o.value,
            (self, o),
            (
                lambda g: _unbroadcast(g, self.value.shape),
                lambda g: _unbroadcast(g, o.value.shape),
            ),
        )

    __radd__ = __add__

    def __sub__(self, other):
        o = as_node(other)
        return Node(
            self.value - o.value,
            (self, o),
            (
                lambda g: _unbroadcast(g, self.value.shape),
                lambda g: _unbroadcast(-g, o.value.shape),
            ),
        )

    def __rsub__(self, other):
        return as_node(other).__sub__(self)

    def __mul__(self, other):
        o = as_node(other)
        return Node(
            self.value * o.value,
            (self, o),
            (
                lambda g: _unbroadcast(g * o.value, self.value.shape),
                lambda g: _unbroadcast(g * self.value, o.value.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = as_node(other)
        return Node(
            self.value / o.value,
            (self, o),
            (
                lambda g: _unbroadcast(g / o.value, self.value.shape),
                lambda g: _unbroadcast(-g * self.value / (o.value * o.value), o.value.shape),
            ),
        )

    def __rtruediv__(self, other):
        return as_node(other).__truediv__(self)

    def __neg__(self):
        return Node(-self.value, (self,), (lambda g: -g,))

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant exponents are supported")
        return Node(
            self.value**p,
            (self,),
            (lambda g: g * p * self.value ** (p - 1),),
        )

    def __matmul__(self, other):
        o = as_node(other)
        return matmul(self, o)

    def __getitem__(self, idx):
        def vjp(g, idx=idx):
            out = np.zeros_like(self.value)
            np.add.at(out, idx, g)
            return out

        return Node(self.value[idx], (self,), (vjp,))

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, self.value.shape).copy()
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, self.value.shape).copy()

        return Node(self.value.sum(axis=axis, keepdims=keepdims), (self,), (vjp,))

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(np.asarray(x, dtype=np.float64))


def constant(x) -> Node:
    """Wrap a value as a leaf whose gradient is discarded (stop-gradient)."""
    return Node(np.asarray(x, dtype=np.float64))


# -- elementwise functions ---------------------------------------------


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, (a,), (lambda g: g * out,))


def log(a: Node) -> Node:
    return Node(np.log(a.value), (a,), (lambda g: g / a.value,))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return Node(out, (a,), (lambda g: g * (1.0 - out * out),))


def relu(a: Node) -> Node:
    mask = a.value > 0.0
    return Node(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def sqrt(a: Node) -> Node:
    out = np.sqrt(a.value)
    return Node(out, (a,), (lambda g: g * 0.5 / out,))


def clip(a: Node, lo: float, hi: float) -> Node:
    mask = (a.value >= lo) & (a.value <= hi)
    return Node(np.clip(a.value, lo, hi), (a,), (lambda g: g * mask,))


def minimum(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    mask = a.value <= b.value
    return Node(
        np.minimum(a.value, b.value),
        (a, b),
        (
            lambda g: _unbroadcast(g * mask, a.value.shape),
            lambda g: _unbroadcast(g * ~mask, b.value.shape),
        ),
    )


# -- linear algebra ----------------------------------------------------


def matmul(a: Node, b: Node) -> Node:
    """Matrix product for the 2D/1D operand combinations we use."""
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        vjps = (lambda g: g @ bv.T, lambda g: av.T @ g)
    elif av.ndim == 1 and bv.ndim == 2:
        vjps = (lambda g: g @ bv.T, lambda g: np.outer(av, g))
    elif av.ndim == 2 and bv.ndim == 1:
        vjps = (lambda g: np.outer(g, bv), lambda g: av.T @ g)
    else:
        raise ValueError(f"unsupported matmul ranks {av.ndim} @ {bv.ndim}")
    return Node(av @ bv, (a, b), vjps)


def affine(x: Node, w: Node, b: Node) -> Node:
    """Fused x @ w + b for (N, d_in) inputs; the hot path of MLP layers."""
    xv, wv = x.value, w.value
    return Node(
        xv @ wv + b.value,
        (x, w, b),
        (
            lambda g: g @ wv.T,
            lambda g: xv.T @ g,
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return vjp

    return Node(
        np.concatenate([n.value for n in nodes], axis=axis),
        tuple(nodes),
        tuple(make_vjp(i) for i in range(len(nodes))),
    )


def tile_rows(v: Node, n: int) -> Node:
    """Broadcast a vector (d,) to (n, d); gradient sums over the rows."""
    return Node(
        np.broadcast_to(v.value, (n, v.value.shape[0])),
        (v,),
        (lambda g: g.sum(axis=0),),
    )


def logsumexp(a: Node) -> Node:
    """log(sum(exp(a))) over a 1D node, stabilized by a detached max shift."""
    m = float(np.max(a.value))
    return log(exp(a - m).sum()) + m


# -- backward pass -----------------------------------------------------


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into `.grad` of every reachable node."""
    if root.value.ndim != 0 and root.value.size != 1:
        raise ValueError("backward() expects a scalar root")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64, copy=True)
            else:
                parent.grad += contrib
