from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ShapeError

# Backward rule: upstream gradient -> one gradient (or None) per parent.
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    A dense 2-D float64 matrix that may take part in reverse-mode differentiation.

    Leaves accumulate gradients across backward passes until `zero_grad` is called.
    Interior nodes hold the gradient of the most recent pass only.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim != 2:
            raise ShapeError("tensor", array.shape)
        self.data = array
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(array) if requires_grad else None
        self.name = name
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError("item", self.shape, (1, 1))
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"


class Graph:
    """Nodes reachable from an output, in topological order (inputs first)."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = []
        state: Dict[int, int] = {}  # 1 = on stack, 2 = done
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            key = id(node)
            if expanded:
                state[key] = 2
                self.nodes.append(node)
                continue
            if state.get(key) == 2:
                continue
            assert state.get(key) != 1, "computation graph contains a cycle"
            state[key] = 1
            stack.append((node, True))
            for parent in node._parents:
                if state.get(id(parent)) != 2 and parent.requires_grad:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    """
    Populate `.grad` of every grad-requiring ancestor of a scalar loss.

    Calling it twice without zeroing adds the gradients of both passes on leaves.
    """
    if loss.shape != (1, 1):
        raise ShapeError("backward", loss.shape, (1, 1))
    if not loss.requires_grad:
        return

    graph = Graph(loss)
    upstream: Dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(graph.nodes):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad += g
            continue
        node.grad = g
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in upstream:
                upstream[key] = upstream[key] + pg
            else:
                upstream[key] = pg
