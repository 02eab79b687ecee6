"""
Tensor Core
Dense tensors with a recorded operation graph and reverse-mode differentiation
"""

import contextlib
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from .errors import GradientError

logger = logging.getLogger(__name__)

_DEFAULT_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True


def get_default_dtype() -> np.dtype:
    """Floating dtype used for new tensors and parameters"""
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """
    Temporarily switch the default floating dtype.

    Gradient checks run inside ``precision(np.float64)``.
    """
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording (inference)"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _as_float_array(data: Any, dtype: Optional[Any]) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=_DEFAULT_DTYPE)


class Tensor:
    """
    Dense real tensor.

    ``data`` is a row-major numpy array; ``node`` is the Function that
    produced the tensor when it was built with graph recording enabled.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Any] = None,
    ):
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node: Optional["Function"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # Arithmetic sugar (implemented in functional)

    def __add__(self, other: Any) -> "Tensor":
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import functional as F
        return F.mul(self, -1.0)

    def __truediv__(self, other: float) -> "Tensor":
        from . import functional as F
        return F.mul(self, 1.0 / float(other))

    def sum(self, axis: Optional[Any] = None, keepdims: bool = False) -> "Tensor":
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Any] = None, keepdims: bool = False) -> "Tensor":
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def backward(self, parameters: Optional[Mapping[str, "Tensor"]] = None) -> Dict[str, np.ndarray]:
        return backward(self, parameters)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays (saving whatever the
    backward pass needs on ``self``) and ``backward`` returning one gradient
    per tensor input (``None`` for inputs that need none).
    """

    def __init__(self) -> None:
        self.parents: Tuple[Tensor, ...] = ()

    @property
    def kind(self) -> str:
        return type(self).__name__

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        fn = cls()
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires_grad)
        if requires_grad:
            fn.parents = inputs
            result.node = fn
        return result

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


@dataclass(frozen=True)
class TraceEntry:
    """One recorded operation"""
    kind: str
    input_ids: Tuple[int, ...]
    output_id: int


class ComputationRecord:
    """
    Operation trace reachable from a root tensor, in topological order.

    Built with an explicit stack so deep backbones do not hit the
    interpreter's recursion limit.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.tensors: List[Tensor] = self._topological_order(root)
        self.entries: List[TraceEntry] = [
            TraceEntry(
                kind=t.node.kind,
                input_ids=tuple(id(p) for p in t.node.parents),
                output_id=id(t),
            )
            for t in self.tensors
            if t.node is not None
        ]

    @staticmethod
    def _topological_order(root: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
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
                for parent in tensor.node.parents:
                    if id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor, parameters: Optional[Mapping[str, Tensor]] = None) -> Dict[str, np.ndarray]:
    """
    Reverse-mode sweep from a scalar loss.

    Args:
        loss: Scalar tensor produced with graph recording enabled
        parameters: Named leaf tensors to report gradients for. When omitted,
            every leaf with ``requires_grad`` reached by the sweep is reported
            under its name (or ``tensor_<id>``).

    Returns:
        Mapping name -> gradient array. Parameters the loss does not depend
        on receive zeros. Leaf ``.grad`` fields are accumulated as well.

    Raises:
        GradientError: If the loss is not a scalar
    """
    if loss.size != 1:
        raise GradientError("backward requires a scalar loss", shape=loss.shape)

    record = ComputationRecord(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, np.ndarray] = {}

    for tensor in reversed(record.tensors):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None:
            if tensor.requires_grad:
                leaves[id(tensor)] = grad
                tensor.grad = grad if tensor.grad is None else tensor.grad + grad
            continue
        parent_grads = tensor.node.backward(grad)
        for parent, parent_grad in zip(tensor.node.parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad

    if parameters is None:
        return {
            (t.name or f"tensor_{id(t)}"): leaves[id(t)]
            for t in record.tensors
            if id(t) in leaves
        }
    return {
        name: leaves.get(id(param), np.zeros_like(param.data))
        for name, param in parameters.items()
    }
