"""Reverse-mode automatic differentiation over dense float64 matrices.

A small dynamic tape: every op returns a Node holding its value, its parent
nodes and a closure that routes the incoming gradient to the parents. The
tape is rebuilt on each forward pass and consumed by backward(), which walks
it once in reverse topological order. Values are 2-D float64 arrays; the
reduction ops produce 0-d scalars, the only shape backward() accepts as a
loss. Gradients of constant subtrees are never materialized.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

# Lower clamp for logs and the symmetric clamp for BCE probabilities.
LOG_CLAMP = 1e-7


def as_matrix(x, name: str = "array") -> np.ndarray:
    """Coerce to a 2-D float64 ndarray, rejecting any other rank."""
    out = np.asarray(x, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    return out


class Node:
    """One tape entry: a value, accumulated gradient and backward closure."""

    __slots__ = ("value", "grad", "parents", "needs_grad", "_push")

    def __init__(self, value: np.ndarray, parents: tuple = (), needs_grad=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self._push = None
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in parents)
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.value.shape


def constant(x) -> Node:
    """Wrap an array the tape will treat as fixed (no gradient)."""
    return Node(np.asarray(x, dtype=np.float64), (), needs_grad=False)


def param(x) -> Node:
    """Wrap an array as a trainable leaf."""
    return Node(np.array(x, dtype=np.float64), (), needs_grad=True)


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.value.shape} x {b.value.shape}")
    out = Node(a.value @ b.value, (a, b))

    def push(g):
        if a.needs_grad:
            a.grad += g @ b.value.T
        if b.needs_grad:
            b.grad += a.value.T @ g

    out._push = push
    return out


def affine(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b with a (1, h) bias row, fused into one tape entry."""
    if x.value.shape[1] != w.value.shape[0]:
        raise ShapeError(f"affine: {x.value.shape} x {w.value.shape}")
    if b.value.shape != (1, w.value.shape[1]):
        raise ShapeError(f"affine: bias shape {b.value.shape} != (1, {w.value.shape[1]})")
    out = Node(x.value @ w.value + b.value, (x, w, b))

    def push(g):
        if x.needs_grad:
            x.grad += g @ w.value.T
        if w.needs_grad:
            w.grad += x.value.T @ g
        if b.needs_grad:
            b.grad += g.sum(axis=0, keepdims=True)

    out._push = push
    return out


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    out = Node(a.value + b.value, (a, b))

    def push(g):
        if a.needs_grad:
            a.grad += g
        if b.needs_grad:
            b.grad += g

    out._push = push
    return out


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    out = Node(a.value - b.value, (a, b))

    def push(g):
        if a.needs_grad:
            a.grad += g
        if b.needs_grad:
            b.grad -= g

    out._push = push
    return out


def mul(a: Node, b: Node) -> Node:
    _same_shape(a, b, "mul")
    out = Node(a.value * b.value, (a, b))

    def push(g):
        if a.needs_grad:
            a.grad += g * b.value
        if b.needs_grad:
            b.grad += g * a.value

    out._push = push
    return out


def scale(a: Node, c: float) -> Node:
    """Multiply by a python scalar held constant."""
    c = float(c)
    out = Node(a.value * c, (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * c

    out._push = push
    return out


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; exp sees a non-positive argument only."""
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(a: Node) -> Node:
    val = sigmoid_array(a.value)
    out = Node(val, (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * (val * (1.0 - val))

    out._push = push
    return out


def tanh(a: Node) -> Node:
    val = np.tanh(a.value)
    out = Node(val, (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * (1.0 - val * val)

    out._push = push
    return out


def relu(a: Node) -> Node:
    val = np.maximum(a.value, 0.0)
    out = Node(val, (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * (a.value > 0.0)

    out._push = push
    return out


def square(a: Node) -> Node:
    out = Node(a.value * a.value, (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * (2.0 * a.value)

    out._push = push
    return out


def log_clamped(a: Node) -> Node:
    """Natural log with the argument clamped below at LOG_CLAMP.

    The clamp keeps saturated sigmoid outputs from producing -inf; inside the
    clamped region the local derivative is zero, matching the flat clamp.
    """
    x = a.value
    xc = np.maximum(x, LOG_CLAMP)
    out = Node(np.log(xc), (a,))

    def push(g):
        if a.needs_grad:
            a.grad += g * ((x > LOG_CLAMP) / xc)

    out._push = push
    return out


def concat_cols(a: Node, b: Node) -> Node:
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeError(f"concat_cols: row counts {a.value.shape[0]} != {b.value.shape[0]}")
    ka = a.value.shape[1]
    out = Node(np.concatenate((a.value, b.value), axis=1), (a, b))

    def push(g):
        if a.needs_grad:
            a.grad += g[:, :ka]
        if b.needs_grad:
            b.grad += g[:, ka:]

    out._push = push
    return out


def reduce_sum(a: Node) -> Node:
    out = Node(np.asarray(a.value.sum()), (a,))

    def push(g):
        if a.needs_grad:
            a.grad += float(g)

    out._push = push
    return out


def reduce_sum_squares(a: Node) -> Node:
    out = Node(np.asarray((a.value * a.value).sum()), (a,))

    def push(g):
        if a.needs_grad:
            a.grad += (2.0 * float(g)) * a.value

    out._push = push
    return out


def bce_loss(pred: Node, target: np.ndarray, weight: np.ndarray) -> Node:
    """Binary cross-entropy of pred against 0/1 targets, averaged over the
    positions where weight is 1. Probabilities are clamped to
    [LOG_CLAMP, 1 - LOG_CLAMP]; an all-zero weight gives loss 0.
    """
    t = np.asarray(target, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    p = pred.value
    if t.shape != p.shape or w.shape != p.shape:
        raise ShapeError(f"bce_loss: shapes {p.shape}, {t.shape}, {w.shape} differ")
    cnt = w.sum()
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    terms = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    value = (terms * w).sum() / cnt if cnt > 0 else 0.0
    out = Node(np.asarray(value), (pred,))

    def push(g):
        if pred.needs_grad and cnt > 0:
            inside = (p > LOG_CLAMP) & (p < 1.0 - LOG_CLAMP)
            d = w * (-(t / pc) + (1.0 - t) / (1.0 - pc)) * inside
            pred.grad += (float(g) / cnt) * d

    out._push = push
    return out


def softmax_xent(logits: Node, labels: np.ndarray) -> Node:
    """Mean cross-entropy of row-wise softmax against integer labels."""
    z = logits.value
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != z.shape[0]:
        raise ShapeError(f"softmax_xent: labels shape {y.shape} for logits {z.shape}")
    zs = z - z.max(axis=1, keepdims=True)
    ez = np.exp(zs)
    denom = ez.sum(axis=1)
    n = z.shape[0]
    rows = np.arange(n)
    nll = np.log(denom) - zs[rows, y]
    out = Node(np.asarray(nll.mean()), (logits,))

    def push(g):
        if logits.needs_grad:
            d = ez / denom[:, None]
            d[rows, y] -= 1.0
            logits.grad += (float(g) / n) * d

    out._push = push
    return out


def _topo(root: Node) -> list:
    """Reverse-mode evaluation order; constant subtrees are pruned."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.needs_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into .grad over the reachable tape.

    Gradients are zeroed first, so calling twice on the same tape yields
    identical results. The loss must be a 0-d scalar.
    """
    if loss.value.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = _topo(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._push is not None:
            node._push(node.grad)


def clip_global_norm(params, max_norm: float = 5.0) -> float:
    """Scale gradients in place so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    total = math.sqrt(total)
    if total > max_norm > 0.0:
        factor = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return total


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Weight init drawn uniformly from +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Adam:
    """Adaptive-moment optimizer over a list of parameter Nodes.

    Holds first/second moment estimates and the step counter; step() applies
    one bias-corrected update in place from each parameter's .grad.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
