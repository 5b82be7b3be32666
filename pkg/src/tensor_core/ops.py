"""
Differentiable operations over 2-D tensors.

There is no broadcasting: operands of elementwise ops must have identical shapes,
and row/column promotion is spelled out with `tile_rows`. Every op checks shapes
and raises ShapeError naming itself and the offending operand shapes.
"""
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import NumericError, ShapeError
from src.tensor_core.tensor import Tensor

OP_CATALOG = (
    "matmul", "transpose", "add", "sub", "mul", "scale", "concat_rows", "concat_cols",
    "reshape", "tile_rows", "softmax_rows", "exp", "log", "mean_rows", "sum_all",
    "log_sum_exp_rows", "leaky_relu", "sigmoid", "gather_rows", "l2_normalize_rows",
    "cosine_similarity", "attention",
)


def op_set() -> Tuple[str, ...]:
    """Names of the differentiable operations this module provides."""
    return OP_CATALOG


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=requires_grad,
        _parents=tuple(parents) if requires_grad else (),
        _backward=backward_fn if requires_grad else None,
        op=op,
    )


def constant(data, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name, op="constant")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def _backward(g):
        return (g @ b.data.T, a.data.T @ g)

    return _node(out, (a, b), _backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _same_shape("mul", a, b)

    def _backward(g):
        return (g * b.data, g * a.data)

    return _node(a.data * b.data, (a, b), _backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack vertically; all operands share the column count."""
    if not tensors:
        raise ShapeError("concat_rows", ())
    cols = tensors[0].shape[1]
    for t in tensors:
        if t.shape[1] != cols:
            raise ShapeError("concat_rows", tensors[0].shape, t.shape)
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def _backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _node(np.vstack([t.data for t in tensors]), tensors, _backward, "concat_rows")


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate horizontally (the `||` of row vectors); operands share the row count."""
    if not tensors:
        raise ShapeError("concat_cols", ())
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.shape[0] != rows:
            raise ShapeError("concat_cols", tensors[0].shape, t.shape)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def _backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _node(np.hstack([t.data for t in tensors]), tensors, _backward, "concat_cols")


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    """Row-major reshape."""
    if rows * cols != a.data.size:
        raise ShapeError("reshape", a.shape, (rows, cols))
    shape = a.shape
    return _node(a.data.reshape(rows, cols).copy(), (a,), lambda g: (g.reshape(shape),), "reshape")


def tile_rows(a: Tensor, k: int) -> Tensor:
    """Repeat a single-row tensor k times."""
    if a.shape[0] != 1:
        raise ShapeError("tile_rows", a.shape, (1, a.shape[1]))
    return _node(np.repeat(a.data, k, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),), "tile_rows")


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Row-wise softmax. With a boolean `mask`, entries outside it get probability 0
    and every row must keep at least one entry.
    """
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError("softmax_rows", x.shape, mask.shape)
        if not np.all(mask.any(axis=1)):
            raise NumericError("softmax row with an empty mask")
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _node(y, (a,), _backward, "softmax_rows")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value")
    x = a.data
    return _node(np.log(x), (a,), lambda g: (g / x,), "log")


def mean_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    """Mean over a subset of rows, returned as a single row."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ShapeError("mean_rows", a.shape, (0,))
    count = rows.size
    shape = a.shape

    def _backward(g):
        out = np.zeros(shape)
        np.add.at(out, rows, g / count)
        return (out,)

    return _node(a.data[rows].mean(axis=0, keepdims=True), (a,), _backward, "mean_rows")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum_all")


def gather_rows(a: Tensor, idx: Sequence[int]) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError("gather_rows", a.shape, (int(idx.max()) + 1,))
    shape = a.shape

    def _backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx].reshape(idx.size, shape[1]), (a,), _backward, "gather_rows")


def log_sum_exp_rows(a: Tensor, weights: Optional[np.ndarray] = None) -> Tensor:
    """
    Per-row log(sum_j w_j * exp(a_j)) as an (r x 1) column, computed stably.

    `weights` is a constant non-negative matrix shaped like `a`; entries with zero
    weight are excluded. Every row needs positive total weight.
    """
    x = a.data
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != x.shape:
            raise ShapeError("log_sum_exp_rows", x.shape, w.shape)
        if np.any(w < 0):
            raise NumericError("negative weight in log-sum-exp")
    active = w > 0
    if x.shape[0] and not np.all(active.any(axis=1)):
        raise NumericError("log-sum-exp row with no active entries")
    m = np.where(active, x, -np.inf).max(axis=1, keepdims=True) if x.shape[1] else np.zeros((x.shape[0], 1))
    e = np.where(active, w * np.exp(np.where(active, x, 0.0) - m), 0.0)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)

    def _backward(g):
        return (g * e / s,)

    return _node(out, (a,), _backward, "log_sum_exp_rows")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    factor = np.where(x > 0, 1.0, slope)
    return _node(x * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def l2_normalize_rows(a: Tensor) -> Tensor:
    x = a.data
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    if np.any(norms == 0):
        raise NumericError("cannot normalize a zero-norm row")
    y = x / norms

    def _backward(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _node(y, (a,), _backward, "l2_normalize_rows")


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs cosine similarity between the rows of a and the rows of b."""
    if a.shape[1] != b.shape[1]:
        raise ShapeError("cosine_similarity", a.shape, b.shape)
    na = l2_normalize_rows(a)
    nb = na if b is a else l2_normalize_rows(b)
    return matmul(na, transpose(nb))


def attention(
    q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None, return_weights: bool = False
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.

    :param q: (r x d_k) queries.
    :param k: (m x d_k) keys.
    :param v: (m x d_v) values.
    :param mask: Optional (r x m) boolean mask of allowed positions.
    :param return_weights: Also return the (r x m) attention weights.
    """
    if q.shape[1] != k.shape[1]:
        raise ShapeError("attention", q.shape, k.shape)
    if k.shape[0] != v.shape[0]:
        raise ShapeError("attention", k.shape, v.shape)
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    weights = softmax_rows(scores, mask=mask)
    out = matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def zeros(rows: int, cols: int) -> Tensor:
    return constant(np.zeros((rows, cols)))


def ones(rows: int, cols: int) -> Tensor:
    return constant(np.ones((rows, cols)))


def sum_scalars(values: List[Tensor]) -> Tensor:
    """Sum a list of 1x1 tensors with two graph nodes."""
    return sum_all(concat_rows(values))
