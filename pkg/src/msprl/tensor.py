"""Dense tensors with reverse-mode automatic differentiation

A `Tensor` wraps a contiguous numpy array. Every differentiable operation is a
`Function` subclass; applying it records the function as the `creator` of the
output tensor, so the recorded operations form a graph hanging off the result.
`backward` linearises that graph into a `Graph` (topological order) and runs
each node's backward rule exactly once, in reverse.

No global tape exists: graphs are owned by the tensors that reference them,
which keeps distinct graphs independent across threads. Only the `no_grad`
switch is per-thread state.
"""
import contextlib
import logging
import threading
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import GraphError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32
FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

ArrayLike = Union[np.ndarray, Sequence[Any], float, int]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations in the current thread record a graph"""
    return getattr(_grad_mode, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Function:
    """Base class for differentiable operations.

    Subclasses implement `forward` on raw numpy arrays and `backward`, which maps
    the gradient w.r.t. the output onto one gradient per input (None for inputs
    that need none). Non-tensor arguments are passed to `forward` as keywords and
    should be stored on `self` when `backward` needs them.
    """

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs: Tuple["Tensor", ...] = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        """Compute the output array"""
        raise NotImplementedError(f"{type(self).__name__} has no forward rule")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Map the output gradient onto input gradients"""
        raise NotImplementedError(f"{type(self).__name__} has no backward rule")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Run the forward rule and record it when any input requires a gradient"""
        func = cls(*inputs)
        dtype = inputs[0].data.dtype
        out = np.asarray(func.forward(*(t.data for t in inputs), **kwargs), dtype=dtype)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{cls.__name__} produced non-finite values")
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires_grad, copy=False)
        if requires_grad:
            result.creator = func
        return result


class Tensor:
    """Dense N-dimensional array, optionally tracked for gradients.

    Images use NCHW layout. Values are float32 unless float64 is requested.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Any] = None,
        copy: bool = True,
    ) -> None:
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in FLOAT_DTYPES:
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        if np.dtype(dtype) not in FLOAT_DTYPES:
            raise TypeError(f"unsupported tensor dtype {np.dtype(dtype)}")
        if copy:
            array = np.array(data, dtype=dtype, order="C")
        else:
            array = np.asarray(data, dtype=dtype, order="C")
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("tensor data contains non-finite values")
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None
        self._consumed = False

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: Any = DEFAULT_DTYPE, requires_grad: bool = False):
        """Tensor filled with zeros"""
        return cls(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad, copy=False)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Value of a single-element tensor"""
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A copy of the data with no graph attached"""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        """Reset the gradient buffer"""
        self.grad = None

    def backward(self) -> None:
        """Populate the gradients of every leaf this scalar depends on"""
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from . import functional  # pylint: disable=import-outside-toplevel

        return functional.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import functional  # pylint: disable=import-outside-toplevel

        return functional.sub(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional  # pylint: disable=import-outside-toplevel

        if isinstance(other, Tensor):
            return functional.mul(self, other)
        return functional.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __hash__(self) -> int:
        return id(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


class Graph:
    """Recorded operations behind a tensor, inputs always before their users"""

    def __init__(self, nodes: List[Tensor]) -> None:
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        """Collect the nodes reachable from `root` in post-order"""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def leaves(self) -> List[Tensor]:
        """Tensors that require gradients but were not produced by an op"""
        return [node for node in self.nodes if node.creator is None and node.requires_grad]

    def run_backward(self, seed: np.ndarray) -> None:
        """Propagate `seed` from the last node back to the leaves"""
        grads: Dict[int, np.ndarray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if node.creator is None:
                if grad is not None:
                    node.grad = grad
                continue
            if grad is None:
                continue
            input_grads = node.creator.backward(grad)
            assert len(input_grads) == len(node.creator.inputs)
            for parent, parent_grad in zip(node.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = np.asarray(parent_grad, dtype=parent.dtype)
                assert parent_grad.shape == parent.shape, f"{type(node.creator).__name__}"
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad
        for node in self.nodes:
            if node.creator is not None:
                node.creator = None
                node._consumed = True  # pylint: disable=protected-access


def backward(loss: Tensor) -> None:
    """Fill `grad` of every leaf with d(loss)/d(leaf)"""
    if loss.size != 1 or loss.ndim != 0:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:  # pylint: disable=protected-access
        raise GraphError("graph was already differentiated; rebuild it with a new forward pass")
    if not loss.requires_grad:
        raise GraphError("loss is detached from any tensor that requires a gradient")
    graph = Graph.trace(loss)
    stale = [leaf for leaf in graph.leaves() if leaf.grad is not None]
    if stale:
        raise GraphError(
            f"{len(stale)} leaf gradient(s) already populated; "
            "reset them before a new backward pass"
        )
    logger.debug("backward over %d nodes", len(graph))
    graph.run_backward(np.ones((), dtype=loss.dtype))
