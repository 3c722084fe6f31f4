#!/usr/bin/env python3
"""
diffcore.py - Tape-based reverse-mode differentiation over 2-D float64 tensors
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

log = logging.getLogger("DIFFCORE")

NORMALIZE_EPS = 1e-12


class DimensionError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class LabelIndexError(IndexError):
    pass


# ----------------------------------------------------------------------
# Tensor
# ----------------------------------------------------------------------
class Tensor:
    """Dense row-major float64 matrix. Scalars are 1x1, vectors are 1xn."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor needs at most 2 dims, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _as_matrix(value) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data.copy()
    return Tensor(value).data


# ----------------------------------------------------------------------
# Graph
# ----------------------------------------------------------------------
@dataclass(eq=False)
class Node:
    id: int
    op: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    params: dict = field(default_factory=dict)
    name: Optional[str] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    def tensor(self) -> Tensor:
        return Tensor(self.value)

    def item(self) -> float:
        return float(self.value[0, 0])


LEAF_OPS = ("param", "const")

# op name -> fn(node, grad_out, input values) -> tuple of input grads (None = no flow)
_BACKWARD: Dict[str, Callable] = {}


def _rule(op: str):
    def register(fn):
        _BACKWARD[op] = fn
        return fn
    return register


class Graph:
    """Append-only tape. Inputs always precede the node that consumes them."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, op: str, inputs: Sequence[Node], value: np.ndarray, **params) -> Node:
        for node in inputs:
            if node.id >= len(self.nodes) or self.nodes[node.id] is not node:
                raise ContractError(f"{op}: input node {node.id} belongs to another graph")
        node = Node(len(self.nodes), op, tuple(n.id for n in inputs), value, params)
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------------
    # Leaves
    # ------------------------------------------------------------------
    def param(self, value, name: Optional[str] = None) -> Node:
        node = self._record("param", (), _as_matrix(value))
        node.name = name
        return node

    def constant(self, value) -> Node:
        return self._record("const", (), _as_matrix(value))

    # ------------------------------------------------------------------
    # Structural / elementwise ops
    # ------------------------------------------------------------------
    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: {a.shape} x {b.shape}")
        return self._record("matmul", (a, b), a.value @ b.value)

    def add(self, a: Node, b: Node) -> Node:
        # Only broadcast allowed: 1 x cols bias row onto n x cols
        if a.shape != b.shape and not (b.shape[0] == 1 and b.shape[1] == a.shape[1]):
            raise DimensionError(f"add: {a.shape} + {b.shape}")
        return self._record("add", (a, b), a.value + b.value)

    def mul(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise DimensionError(f"mul: {a.shape} * {b.shape}")
        return self._record("mul", (a, b), a.value * b.value)

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)
        return self._record("scale", (a,), a.value * c, c=c)

    def relu(self, a: Node) -> Node:
        return self._record("relu", (a,), np.maximum(a.value, 0.0))

    def tanh(self, a: Node) -> Node:
        return self._record("tanh", (a,), np.tanh(a.value))

    def sigmoid(self, a: Node) -> Node:
        return self._record("sigmoid", (a,), expit(a.value))

    def transpose(self, a: Node) -> Node:
        return self._record("transpose", (a,), np.ascontiguousarray(a.value.T))

    def concat_cols(self, a: Node, b: Node) -> Node:
        if a.shape[0] != b.shape[0]:
            raise DimensionError(f"concat_cols: {a.shape} | {b.shape}")
        return self._record("concat_cols", (a, b), np.hstack([a.value, b.value]))

    def concat_rows(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[1]:
            raise DimensionError(f"concat_rows: {a.shape} over {b.shape}")
        return self._record("concat_rows", (a, b), np.vstack([a.value, b.value]))

    def mean(self, a: Node) -> Node:
        return self._record("mean", (a,), np.array([[a.value.mean()]]))

    def sum(self, a: Node) -> Node:
        return self._record("sum", (a,), np.array([[a.value.sum()]]))

    def grad_reverse(self, x: Node, lam: float) -> Node:
        lam = float(lam)
        if not lam >= 0.0:
            raise ParameterError(f"grad_reverse: coefficient must be >= 0, got {lam}")
        return self._record("grad_reverse", (x,), x.value, lam=lam)

    def normalize_rows(self, x: Node, eps: float = NORMALIZE_EPS) -> Node:
        norms = np.sqrt((x.value ** 2).sum(axis=1, keepdims=True))
        return self._record("normalize_rows", (x,), x.value / (norms + eps), eps=eps)

    # ------------------------------------------------------------------
    # Losses
    # ------------------------------------------------------------------
    def softmax_cross_entropy(self, logits: Node, labels) -> Node:
        labels = _check_labels(logits, labels)
        logp = log_softmax(logits.value, axis=1)
        value = -logp[np.arange(len(labels)), labels].mean()
        return self._record("softmax_ce", (logits,), np.array([[value]]), labels=labels)

    def sigmoid_cross_entropy(self, logits: Node, targets) -> Node:
        targets = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
        if logits.shape != targets.shape:
            raise DimensionError(f"sigmoid_cross_entropy: {logits.shape} vs targets {targets.shape}")
        z = logits.value
        value = (np.logaddexp(0.0, z) - targets * z).mean()
        return self._record("sigmoid_ce", (logits,), np.array([[value]]), targets=targets)

    def l1_loss(self, pred: Node, target: Node) -> Node:
        if pred.shape != target.shape:
            raise DimensionError(f"l1_loss: {pred.shape} vs {target.shape}")
        value = np.abs(pred.value - target.value).mean()
        return self._record("l1", (pred, target), np.array([[value]]))

    def ce_scale_grad(self, logits: Node, labels) -> Node:
        """d/ds of mean cross-entropy of (s * logits) at s = 1, as a graph node."""
        labels = _check_labels(logits, labels)
        p = softmax(logits.value, axis=1)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(labels)), labels] = 1.0
        value = ((p - onehot) * logits.value).sum(axis=1).mean()
        return self._record("ce_scale_grad", (logits,), np.array([[value]]), labels=labels)

    def l1_scale_grad(self, pred: Node, target: Node) -> Node:
        """d/ds of mean |s * pred - target| at s = 1."""
        if pred.shape != target.shape:
            raise DimensionError(f"l1_scale_grad: {pred.shape} vs {target.shape}")
        value = (np.sign(pred.value - target.value) * pred.value).mean()
        return self._record("l1_scale_grad", (pred, target), np.array([[value]]))

    # ------------------------------------------------------------------
    # Backward
    # ------------------------------------------------------------------
    def backward(self, loss: Node) -> Dict[int, Tensor]:
        if loss.id >= len(self.nodes) or self.nodes[loss.id] is not loss:
            raise ContractError("backward: loss node is not part of this graph")
        if loss.shape != (1, 1):
            raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

        grads: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss.id] = np.ones((1, 1))
        for node in reversed(self.nodes[: loss.id + 1]):
            upstream = grads[node.id]
            if upstream is None or node.op in LEAF_OPS:
                continue
            inputs = [self.nodes[i].value for i in node.inputs]
            for idx, g in zip(node.inputs, _BACKWARD[node.op](node, upstream, inputs)):
                if g is None:
                    continue
                grads[idx] = g if grads[idx] is None else grads[idx] + g

        return {
            node.id: Tensor(grads[node.id] if grads[node.id] is not None else np.zeros(node.shape))
            for node in self.nodes
            if node.op == "param"
        }


def _check_labels(logits: Node, labels) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError(f"labels length {labels.shape[0]} vs logits {logits.shape}")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise LabelIndexError("class labels must be integers")
    labels = labels.astype(np.int64)
    c = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelIndexError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    return labels


# ----------------------------------------------------------------------
# Backward rules
# ----------------------------------------------------------------------
@_rule("matmul")
def _matmul_grad(node, g, inputs):
    a, b = inputs
    return g @ b.T, a.T @ g


@_rule("add")
def _add_grad(node, g, inputs):
    a, b = inputs
    gb = g if b.shape == a.shape else g.sum(axis=0, keepdims=True)
    return g, gb


@_rule("mul")
def _mul_grad(node, g, inputs):
    a, b = inputs
    return g * b, g * a


@_rule("scale")
def _scale_grad(node, g, inputs):
    return (g * node.params["c"],)


@_rule("relu")
def _relu_grad(node, g, inputs):
    # derivative at exactly 0 is 0
    return (g * (inputs[0] > 0.0),)


@_rule("tanh")
def _tanh_grad(node, g, inputs):
    return (g * (1.0 - node.value ** 2),)


@_rule("sigmoid")
def _sigmoid_grad(node, g, inputs):
    return (g * node.value * (1.0 - node.value),)


@_rule("transpose")
def _transpose_grad(node, g, inputs):
    return (g.T,)


@_rule("concat_cols")
def _concat_cols_grad(node, g, inputs):
    split = inputs[0].shape[1]
    return g[:, :split], g[:, split:]


@_rule("concat_rows")
def _concat_rows_grad(node, g, inputs):
    split = inputs[0].shape[0]
    return g[:split], g[split:]


@_rule("mean")
def _mean_grad(node, g, inputs):
    a = inputs[0]
    return (np.full(a.shape, g[0, 0] / a.size),)


@_rule("sum")
def _sum_grad(node, g, inputs):
    return (np.full(inputs[0].shape, g[0, 0]),)


@_rule("grad_reverse")
def _grad_reverse_grad(node, g, inputs):
    return (g * -node.params["lam"],)


@_rule("normalize_rows")
def _normalize_rows_grad(node, g, inputs):
    x = inputs[0]
    r = np.sqrt((x ** 2).sum(axis=1, keepdims=True))
    s = r + node.params["eps"]
    r_safe = np.where(r > 0.0, r, 1.0)
    xg = (x * g).sum(axis=1, keepdims=True)
    return (g / s - x * xg / (s ** 2 * r_safe),)


@_rule("softmax_ce")
def _softmax_ce_grad(node, g, inputs):
    logits = inputs[0]
    labels = node.params["labels"]
    n = logits.shape[0]
    p = softmax(logits, axis=1)
    p[np.arange(n), labels] -= 1.0
    return (p * (g[0, 0] / n),)


@_rule("sigmoid_ce")
def _sigmoid_ce_grad(node, g, inputs):
    z = inputs[0]
    return ((expit(z) - node.params["targets"]) * (g[0, 0] / z.shape[0]),)


@_rule("l1")
def _l1_grad(node, g, inputs):
    pred, target = inputs
    # np.sign(0) == 0 gives the zero subgradient at ties
    d = np.sign(pred - target) * (g[0, 0] / pred.size)
    return d, -d


@_rule("ce_scale_grad")
def _ce_scale_grad_grad(node, g, inputs):
    z = inputs[0]
    labels = node.params["labels"]
    n = z.shape[0]
    p = softmax(z, axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), labels] = 1.0
    zbar = (p * z).sum(axis=1, keepdims=True)
    return (((p - onehot) + p * (z - zbar)) * (g[0, 0] / n),)


@_rule("l1_scale_grad")
def _l1_scale_grad_grad(node, g, inputs):
    pred, target = inputs
    return np.sign(pred - target) * (g[0, 0] / pred.size), None


# ----------------------------------------------------------------------
# Finite differences
# ----------------------------------------------------------------------
def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, one entry at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + step
        hi = fn(x)
        x[idx] = orig - step
        lo = fn(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(
    build: Callable[[Graph, Dict[str, Node]], Node],
    inputs: Dict[str, np.ndarray],
    step: float = 1e-5,
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Compare backward() against central differences for every named input.

    `build(graph, nodes)` must construct the scalar loss from the leaf nodes.
    Returns name -> (analytic, numeric).
    """

    def run(values: Dict[str, np.ndarray]):
        graph = Graph()
        nodes = {name: graph.param(val, name) for name, val in values.items()}
        loss = build(graph, nodes)
        return graph, nodes, loss

    graph, nodes, loss = run(inputs)
    grads = graph.backward(loss)
    report = {}
    for name in inputs:
        def fn(x, _name=name):
            values = dict(inputs)
            values[_name] = x
            return run(values)[2].item()

        report[name] = (grads[nodes[name].id].data, numerical_gradient(fn, inputs[name], step))
    return report
