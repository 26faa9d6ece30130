"""Reverse-mode differentiation over dense float64 matrices.

A :class:`Tape` records every operation in execution order (a Wengert list).
Each op kind has a forward rule in ``_FORWARD`` and an adjoint rule in
``_ADJOINTS``; ``Tape.backward`` walks the list in reverse and accumulates
vector-Jacobian products into the leaves.

Every value is a 2-d array. Broadcasting is limited to a 1 x d row (bias add,
layer-norm gain/bias) and, for ``mul``, an n x 1 column or a 1 x 1 scalar.
Fixed linear operators (sparse matrices, dense wavelet bases, Chebyshev
``LinearOperator`` objects) enter through ``sparse_apply`` as attributes and are
never differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..core.exceptions import ShapeError

LN_EPS = 1e-6
NORM_EPS = 1e-12


@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...]
    value: np.ndarray
    requires_grad: bool
    attrs: dict[str, Any] = field(default_factory=dict)
    cache: Any = None


class Var:
    """Reference to a node on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __add__(self, other: Var) -> Var:
        return add(self, other)

    def __sub__(self, other: Var) -> Var:
        return add(self, scale(other, -1.0))

    def __matmul__(self, other: Var) -> Var:
        return matmul(self, other)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index} {node.kind} {self.shape})"


def _as_matrix(value) -> np.ndarray:
    a = np.array(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"tape values must be 2-d, got shape {a.shape}")
    return a


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: dict[str, int] = {}

    def _append(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, name: str, value) -> Var:
        """Register a differentiable parameter."""
        if name in self.leaves:
            raise ValueError(f"leaf '{name}' already registered")
        var = self._append(Node("leaf", (), _as_matrix(value), True))
        self.leaves[name] = var.index
        return var

    def constant(self, value) -> Var:
        return self._append(Node("const", (), _as_matrix(value), False))

    def forward(self, kind: str, *inputs: Var, **attrs) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise ValueError("inputs belong to a different tape")
        values = [self.nodes[v.index].value for v in inputs]
        out, cache = _FORWARD[kind](values, attrs)
        requires = any(self.nodes[v.index].requires_grad for v in inputs)
        return self._append(
            Node(kind, tuple(v.index for v in inputs), out, requires, attrs, cache)
        )

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` for every registered leaf."""
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for idx in range(loss.index, -1, -1):
            node = self.nodes[idx]
            g = grads.get(idx)
            if g is None or not node.requires_grad or not node.inputs:
                continue
            values = [self.nodes[i].value for i in node.inputs]
            input_grads = _ADJOINTS[node.kind](g, values, node.value, node.cache, node.attrs)
            for i, gi in zip(node.inputs, input_grads):
                if gi is None or not self.nodes[i].requires_grad:
                    continue
                if i in grads:
                    grads[i] = grads[i] + gi
                else:
                    grads[i] = gi
        return {
            name: grads.get(i, np.zeros_like(self.nodes[i].value))
            for name, i in self.leaves.items()
        }


# ---------------------------------------------------------------------------
# Forward and adjoint rules
# ---------------------------------------------------------------------------

def _check(cond: bool, msg: str):
    if not cond:
        raise ShapeError(msg)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcastable(a: np.ndarray, b: np.ndarray, allow_column: bool) -> bool:
    if a.shape == b.shape:
        return True
    if b.shape == (1, a.shape[1]):
        return True
    if allow_column and (b.shape == (a.shape[0], 1) or b.shape == (1, 1)):
        return True
    return False


def _fwd_matmul(vals, attrs):
    a, b = vals
    _check(a.shape[1] == b.shape[0], f"matmul: {a.shape} @ {b.shape}")
    return a @ b, None


def _adj_matmul(g, vals, out, cache, attrs):
    a, b = vals
    return g @ b.T, a.T @ g


def _fwd_sparse_apply(vals, attrs):
    (x,) = vals
    op = attrs["op"]
    _check(op.shape[1] == x.shape[0], f"sparse_apply: operator {op.shape} vs {x.shape}")
    return np.asarray(op @ x, dtype=np.float64), None


def _adj_sparse_apply(g, vals, out, cache, attrs):
    return (np.asarray(attrs["op"].T @ g, dtype=np.float64),)


def _fwd_add(vals, attrs):
    a, b = vals
    _check(_broadcastable(a, b, allow_column=False), f"add: {a.shape} + {b.shape}")
    return a + b, None


def _adj_add(g, vals, out, cache, attrs):
    a, b = vals
    return g, _unbroadcast(g, b.shape)


def _fwd_scale(vals, attrs):
    return attrs["factor"] * vals[0], None


def _adj_scale(g, vals, out, cache, attrs):
    return (attrs["factor"] * g,)


def _fwd_relu(vals, attrs):
    return np.maximum(vals[0], 0.0), None


def _adj_relu(g, vals, out, cache, attrs):
    return (g * (vals[0] > 0.0),)


def _fwd_softplus(vals, attrs):
    return np.logaddexp(0.0, vals[0]), None


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _adj_softplus(g, vals, out, cache, attrs):
    return (g * _sigmoid(vals[0]),)


def _fwd_sigmoid(vals, attrs):
    return _sigmoid(vals[0]), None


def _adj_sigmoid(g, vals, out, cache, attrs):
    return (g * out * (1.0 - out),)


def _fwd_layer_norm(vals, attrs):
    x, gain, bias = vals
    d = x.shape[1]
    _check(gain.shape == (1, d) and bias.shape == (1, d), "layer_norm: gain/bias must be 1 x d")
    eps = attrs.get("eps", LN_EPS)
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=1, keepdims=True) + eps)
    x_hat = centered * inv_std
    return x_hat * gain + bias, (x_hat, inv_std)


def _adj_layer_norm(g, vals, out, cache, attrs):
    x, gain, bias = vals
    x_hat, inv_std = cache
    g_hat = g * gain
    gx = inv_std * (
        g_hat
        - g_hat.mean(axis=1, keepdims=True)
        - x_hat * (g_hat * x_hat).mean(axis=1, keepdims=True)
    )
    return gx, (g * x_hat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)


def _fwd_concat_rows(vals, attrs):
    _check(len({v.shape[1] for v in vals}) == 1, "concat_rows: column counts differ")
    return np.vstack(vals), [v.shape[0] for v in vals]


def _adj_concat_rows(g, vals, out, cache, attrs):
    return tuple(np.split(g, np.cumsum(cache)[:-1], axis=0))


def _fwd_concat_cols(vals, attrs):
    _check(len({v.shape[0] for v in vals}) == 1, "concat_cols: row counts differ")
    return np.hstack(vals), [v.shape[1] for v in vals]


def _adj_concat_cols(g, vals, out, cache, attrs):
    return tuple(np.split(g, np.cumsum(cache)[:-1], axis=1))


def _fwd_mean_rows(vals, attrs):
    return vals[0].mean(axis=0, keepdims=True), None


def _adj_mean_rows(g, vals, out, cache, attrs):
    n = vals[0].shape[0]
    return (np.broadcast_to(g / n, vals[0].shape).copy(),)


def _fwd_total(vals, attrs):
    return np.array([[vals[0].sum()]]), None


def _adj_total(g, vals, out, cache, attrs):
    return (np.full(vals[0].shape, g[0, 0]),)


def _fwd_row_dot(vals, attrs):
    a, b = vals
    _check(a.shape == b.shape, f"row_dot: {a.shape} vs {b.shape}")
    return (a * b).sum(axis=1, keepdims=True), None


def _adj_row_dot(g, vals, out, cache, attrs):
    a, b = vals
    return g * b, g * a


def _fwd_l2_normalize_rows(vals, attrs):
    x = vals[0]
    norms = np.sqrt((x**2).sum(axis=1, keepdims=True))
    safe = norms > NORM_EPS
    inv = np.where(safe, 1.0 / np.where(safe, norms, 1.0), 0.0)
    return x * inv, inv


def _adj_l2_normalize_rows(g, vals, out, cache, attrs):
    inv = cache
    return ((g - out * (g * out).sum(axis=1, keepdims=True)) * inv,)


def _fwd_log_sigmoid(vals, attrs):
    return -np.logaddexp(0.0, -vals[0]), None


def _adj_log_sigmoid(g, vals, out, cache, attrs):
    return (g * _sigmoid(-vals[0]),)


def _fwd_logsumexp_rows(vals, attrs):
    x = vals[0]
    m = x.max(axis=1, keepdims=True)
    shifted = np.exp(x - m)
    total = shifted.sum(axis=1, keepdims=True)
    return m + np.log(total), shifted / total


def _adj_logsumexp_rows(g, vals, out, cache, attrs):
    return (g * cache,)


def _fwd_gather_rows(vals, attrs):
    idx = attrs["index"]
    return vals[0][idx], None


def _adj_gather_rows(g, vals, out, cache, attrs):
    full = np.zeros_like(vals[0])
    np.add.at(full, attrs["index"], g)
    return (full,)


def _fwd_mul(vals, attrs):
    a, b = vals
    _check(_broadcastable(a, b, allow_column=True), f"mul: {a.shape} * {b.shape}")
    return a * b, None


def _adj_mul(g, vals, out, cache, attrs):
    a, b = vals
    return g * b, _unbroadcast(g * a, b.shape)


def _fwd_transpose(vals, attrs):
    return vals[0].T.copy(), None


def _adj_transpose(g, vals, out, cache, attrs):
    return (g.T.copy(),)


_FORWARD: dict[str, Callable] = {
    "matmul": _fwd_matmul,
    "sparse_apply": _fwd_sparse_apply,
    "add": _fwd_add,
    "scale": _fwd_scale,
    "relu": _fwd_relu,
    "softplus": _fwd_softplus,
    "sigmoid": _fwd_sigmoid,
    "layer_norm": _fwd_layer_norm,
    "concat_rows": _fwd_concat_rows,
    "concat_cols": _fwd_concat_cols,
    "mean_rows": _fwd_mean_rows,
    "total": _fwd_total,
    "row_dot": _fwd_row_dot,
    "l2_normalize_rows": _fwd_l2_normalize_rows,
    "log_sigmoid": _fwd_log_sigmoid,
    "logsumexp_rows": _fwd_logsumexp_rows,
    "gather_rows": _fwd_gather_rows,
    "mul": _fwd_mul,
    "transpose": _fwd_transpose,
}

_ADJOINTS: dict[str, Callable] = {
    "matmul": _adj_matmul,
    "sparse_apply": _adj_sparse_apply,
    "add": _adj_add,
    "scale": _adj_scale,
    "relu": _adj_relu,
    "softplus": _adj_softplus,
    "sigmoid": _adj_sigmoid,
    "layer_norm": _adj_layer_norm,
    "concat_rows": _adj_concat_rows,
    "concat_cols": _adj_concat_cols,
    "mean_rows": _adj_mean_rows,
    "total": _adj_total,
    "row_dot": _adj_row_dot,
    "l2_normalize_rows": _adj_l2_normalize_rows,
    "log_sigmoid": _adj_log_sigmoid,
    "logsumexp_rows": _adj_logsumexp_rows,
    "gather_rows": _adj_gather_rows,
    "mul": _adj_mul,
    "transpose": _adj_transpose,
}

OP_KINDS = tuple(_FORWARD)


# ---------------------------------------------------------------------------
# Op helpers
# ---------------------------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    return a.tape.forward("matmul", a, b)


def sparse_apply(op, x: Var) -> Var:
    """X -> op @ X for a fixed (non-differentiated) linear operator."""
    return x.tape.forward("sparse_apply", x, op=op)


def add(a: Var, b: Var) -> Var:
    return a.tape.forward("add", a, b)


def scale(a: Var, factor: float) -> Var:
    return a.tape.forward("scale", a, factor=float(factor))


def relu(a: Var) -> Var:
    return a.tape.forward("relu", a)


def softplus(a: Var) -> Var:
    return a.tape.forward("softplus", a)


def sigmoid(a: Var) -> Var:
    return a.tape.forward("sigmoid", a)


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = LN_EPS) -> Var:
    return x.tape.forward("layer_norm", x, gain, bias, eps=eps)


def concat_rows(*parts: Var) -> Var:
    return parts[0].tape.forward("concat_rows", *parts)


def concat_cols(*parts: Var) -> Var:
    return parts[0].tape.forward("concat_cols", *parts)


def mean_rows(a: Var) -> Var:
    return a.tape.forward("mean_rows", a)


def total(a: Var) -> Var:
    """Sum of all entries as a 1 x 1 value."""
    return a.tape.forward("total", a)


def row_dot(a: Var, b: Var) -> Var:
    return a.tape.forward("row_dot", a, b)


def l2_normalize_rows(a: Var) -> Var:
    return a.tape.forward("l2_normalize_rows", a)


def log_sigmoid(a: Var) -> Var:
    return a.tape.forward("log_sigmoid", a)


def logsumexp_rows(a: Var) -> Var:
    return a.tape.forward("logsumexp_rows", a)


def gather_rows(a: Var, index) -> Var:
    return a.tape.forward("gather_rows", a, index=np.asarray(index, dtype=np.int64))


def mul(a: Var, b: Var) -> Var:
    return a.tape.forward("mul", a, b)


def transpose(a: Var) -> Var:
    return a.tape.forward("transpose", a)


def mean_of(parts: list[Var]) -> Var:
    """Elementwise mean of equally shaped values."""
    out = parts[0]
    for p in parts[1:]:
        out = add(out, p)
    return scale(out, 1.0 / len(parts)) if len(parts) > 1 else out


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------

def grad_check(
    fn: Callable[[Tape, dict[str, Var]], Var],
    leaves: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between ``backward`` and central differences.

    ``fn`` builds a scalar loss on a fresh tape from the registered leaves.
    Error per coordinate is |g_ad - g_fd| / (|g_fd| + 1e-8).
    """
    leaves = {k: _as_matrix(v) for k, v in leaves.items()}

    def evaluate(values: dict[str, np.ndarray]):
        tape = Tape()
        vars_ = {k: tape.leaf(k, v) for k, v in values.items()}
        loss = fn(tape, vars_)
        return tape, loss

    tape, loss = evaluate(leaves)
    analytic = tape.backward(loss)

    worst = 0.0
    for name, base in leaves.items():
        for pos in np.ndindex(base.shape):
            plus = {k: v.copy() for k, v in leaves.items()}
            minus = {k: v.copy() for k, v in leaves.items()}
            plus[name][pos] += eps
            minus[name][pos] -= eps
            f_plus = evaluate(plus)[1].value.item()
            f_minus = evaluate(minus)[1].value.item()
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(analytic[name][pos] - g_fd) / (abs(g_fd) + 1e-8)
            worst = max(worst, err)
    return worst
