"""Dense tensor type with reverse-mode gradient recording."""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from Utilities.errors import GraphError

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording graph nodes."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


@dataclass(frozen=True)
class GraphNode:
    """How a tensor was produced: op tag, inputs, the cached forward value and the
    rule that maps an output gradient to one gradient per input (``None`` for no
    contribution)."""

    op: str
    inputs: tuple[Tensor, ...]
    value: np.ndarray = field(compare=False, repr=False)
    backward: BackwardRule


class Tensor:
    """Contiguous real array with an optional gradient buffer.

    Leaves created with ``requires_grad=True`` accumulate into ``grad`` on every
    call to :func:`backward`; tensors produced by ops keep a :class:`GraphNode`.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ) -> None:
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data: np.ndarray = np.ascontiguousarray(array)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: GraphNode | None = None
        self.name = name

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        op: str,
        inputs: Sequence[Tensor],
        backward: BackwardRule,
    ) -> Tensor:
        """Wrap an op result, recording the node when any input needs a gradient."""
        requires_grad = _grad_enabled and any(t.requires_grad for t in inputs)
        out = cls(data, requires_grad=requires_grad)
        if requires_grad:
            out.node = GraphNode(op, tuple(inputs), out.data, backward)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        if self.size != 1:
            raise GraphError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data.copy(), dtype=self.dtype)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        op = f" op={self.node.op}" if self.node else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{op}{label})"

    def __add__(self, other: Tensor) -> Tensor:
        from Autodiff import ops

        return ops.add(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        from Autodiff import ops

        return ops.mul(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        from Autodiff import ops

        return ops.sub(self, other)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Post-order over the differentiable ancestors of ``root``."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]

    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Intermediate gradients live only for the duration of the call, so repeated
    calls add up on leaves without double counting inside the graph.

    Args:
        loss: A single-element tensor produced by recorded ops.

    Raises:
        GraphError: If the loss is not scalar or does not require a gradient.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires a gradient")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for tensor in reversed(_topological_order(loss)):
        gradient = pending.pop(id(tensor), None)
        if gradient is None:
            continue

        if tensor.node is None:
            if tensor.grad is None:
                tensor.grad = np.array(gradient, dtype=tensor.dtype, copy=True)
            else:
                tensor.grad = tensor.grad + gradient
            continue

        input_gradients = tensor.node.backward(gradient)
        for parent, parent_gradient in zip(tensor.node.inputs, input_gradients):
            if parent_gradient is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_gradient
            else:
                pending[key] = parent_gradient
