"""Minimal reverse-mode automatic differentiation over numpy arrays.

Everything runs in float64. A Node wraps an ndarray and remembers how to push
gradients to its parents; backward() walks the recorded graph once in reverse
topological order. Only the operations the encoder and the seq2seq model need
are provided. Constants may be passed as plain ndarrays (or scalars) anywhere
a Node is accepted; they receive no gradient.
"""

from __future__ import annotations

import numpy as np

Arrayish = "Node | np.ndarray | float"


class Node:
    __slots__ = ("data", "grad", "parents", "_bw")

    def __init__(self, data, parents=(), bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._bw = bw

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        # always allocate on accumulate; incoming g may be a view
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g


def data_of(x) -> np.ndarray:
    return x.data if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Node:
    ad, bd = data_of(a), data_of(b)
    out_parents = tuple(x for x in (a, b) if isinstance(x, Node))

    def bw(g):
        if isinstance(a, Node):
            a.accumulate(_unbroadcast(g, ad.shape))
        if isinstance(b, Node):
            b.accumulate(_unbroadcast(g, bd.shape))

    return Node(ad + bd, out_parents, bw)


def mul(a, b) -> Node:
    ad, bd = data_of(a), data_of(b)
    out_parents = tuple(x for x in (a, b) if isinstance(x, Node))

    def bw(g):
        if isinstance(a, Node):
            a.accumulate(_unbroadcast(g * bd, ad.shape))
        if isinstance(b, Node):
            b.accumulate(_unbroadcast(g * ad, bd.shape))

    return Node(ad * bd, out_parents, bw)


def matmul(a, b) -> Node:
    ad, bd = data_of(a), data_of(b)
    out_parents = tuple(x for x in (a, b) if isinstance(x, Node))

    def bw(g):
        if isinstance(a, Node):
            a.accumulate(_unbroadcast(g @ bd.swapaxes(-1, -2), ad.shape))
        if isinstance(b, Node):
            b.accumulate(_unbroadcast(ad.swapaxes(-1, -2) @ g, bd.shape))

    return Node(ad @ bd, out_parents, bw)


def reshape(a: Node, shape) -> Node:
    def bw(g):
        a.accumulate(g.reshape(a.data.shape))

    return Node(a.data.reshape(shape), (a,), bw)


def transpose(a: Node, axes) -> Node:
    inv = np.argsort(axes)

    def bw(g):
        a.accumulate(g.transpose(inv))

    return Node(a.data.transpose(axes), (a,), bw)


def concat(parts: list, axis: int) -> Node:
    datas = [data_of(p) for p in parts]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(part, Node):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                part.accumulate(g[tuple(sl)])

    out_parents = tuple(p for p in parts if isinstance(p, Node))
    return Node(np.concatenate(datas, axis=axis), out_parents, bw)


def embed(table: Node, ids: np.ndarray) -> Node:
    """Row gather from an embedding table; scatter-add on the way back."""
    ids = np.asarray(ids)

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        table.accumulate(gt)

    return Node(table.data[ids], (table,), bw)


def tsum(a: Node, axis=None, keepdims: bool = False) -> Node:
    def bw(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape))
            return
        gg = g if keepdims else np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(gg, a.data.shape))

    return Node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def power(a: Node, p: float) -> Node:
    out = a.data**p

    def bw(g):
        a.accumulate(g * p * a.data ** (p - 1.0))

    return Node(out, (a,), bw)


def softmax(a: Node, axis: int = -1) -> Node:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        a.accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return Node(y, (a,), bw)


def log_softmax(a: Node, axis: int = -1) -> Node:
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(g):
        a.accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return Node(y, (a,), bw)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Node) -> Node:
    """tanh-approximate GELU; smooth everywhere, which keeps finite-difference
    gradient checks clean."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        a.accumulate(g * dy)

    return Node(y, (a,), bw)


def select_last(a: Node, idx: np.ndarray) -> Node:
    """out[...] = a[..., idx[...]] along the last axis (one pick per slot)."""
    idx = np.asarray(idx)
    picked = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gt = np.zeros_like(a.data)
        np.put_along_axis(gt, idx[..., None], g[..., None], axis=-1)
        a.accumulate(gt)

    return Node(picked, (a,), bw)


def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into every reachable Node's .grad.
    `root` must be scalar-like (gradient seeded with ones)."""
    topo: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    root.accumulate(np.ones_like(root.data))
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)
