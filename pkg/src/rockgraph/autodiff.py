"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray plus a backward closure; calling
backward(root) walks the graph in reverse topological order and accumulates
gradients into every tensor with requires_grad set. Only the handful of
operations needed by the graph regressor are provided.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def backward(root: Tensor, seed: float = 1.0) -> None:
    """Accumulate d(root)/d(tensor) into .grad over the whole graph."""
    topo: list[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    root.accumulate(np.full_like(root.value, seed))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def _back():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.value.shape))

    out._backward = _back
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def _back():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.value, a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.value, b.value.shape))

    out._backward = _back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value @ b.value, parents=(a, b))

    def _back():
        if a.requires_grad:
            a.accumulate(out.grad @ b.value.T)
        if b.requires_grad:
            b.accumulate(a.value.T @ out.grad)

    out._backward = _back
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    out = Tensor(np.where(mask, a.value, 0.0), parents=(a,))

    def _back():
        if a.requires_grad:
            a.accumulate(out.grad * mask)

    out._backward = _back
    return out


def scatter_rows(h: Tensor, src: np.ndarray, dst: np.ndarray, n_out: int) -> Tensor:
    """out[dst[e]] += h[src[e]] for every entry e; rows not hit stay zero."""
    val = np.zeros((n_out, h.value.shape[1]))
    np.add.at(val, dst, h.value[src])
    out = Tensor(val, parents=(h,))

    def _back():
        if h.requires_grad:
            g = np.zeros_like(h.value)
            np.add.at(g, src, out.grad[dst])
            h.accumulate(g)

    out._backward = _back
    return out


def segment_sum(h: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Sum rows of h into n_seg buckets given per-row bucket ids."""
    val = np.zeros((n_seg, h.value.shape[1]))
    np.add.at(val, seg, h.value)
    out = Tensor(val, parents=(h,))

    def _back():
        if h.requires_grad:
            h.accumulate(out.grad[seg])

    out._backward = _back
    return out


def concat_cols(tensors) -> Tensor:
    tensors = list(tensors)
    widths = [t.value.shape[1] for t in tensors]
    out = Tensor(np.concatenate([t.value for t in tensors], axis=1),
                 parents=tuple(tensors))

    def _back():
        start = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t.accumulate(out.grad[:, start:start + w])
            start += w

    out._backward = _back
    return out


def dropout_mask(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a precomputed inverted-dropout mask (0 or 1/(1-p))."""
    out = Tensor(a.value * mask, parents=(a,))

    def _back():
        if a.requires_grad:
            a.accumulate(out.grad * mask)

    out._backward = _back
    return out


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    diff = pred.value - target
    out = Tensor(np.array((diff ** 2).mean()), parents=(pred,))

    def _back():
        if pred.requires_grad:
            pred.accumulate(out.grad * 2.0 * diff / diff.size)

    out._backward = _back
    return out
