"""
Module Interface Contract
All model components implement this interface so the trainer, checkpoints and audits can walk them uniformly.
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


class ModuleMode(str, Enum):
    """Module execution mode"""
    TRAIN = "train"
    EVAL = "eval"


class Parameter(Tensor):
    """Trainable leaf tensor"""

    def __init__(self, data: Any, name: Optional[str] = None):
        super().__init__(np.array(data, copy=True), requires_grad=True, name=name)


class BaseModule(ABC):
    """
    Base class that all model components inherit from.

    Parameters, buffers and child modules are discovered from instance
    attributes in assignment order, which fixes the naming used by
    checkpoints and parameter reports.
    """

    def __init__(self) -> None:
        self.mode: ModuleMode = ModuleMode.TRAIN
        self._buffers: Dict[str, np.ndarray] = {}

    @abstractmethod
    def forward(self, *args: Any, **kwargs: Any) -> Any:
        """
        Run the component.

        Returns:
            Output tensor(s) recorded on the computation graph
        """

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    @property
    def training(self) -> bool:
        return self.mode == ModuleMode.TRAIN

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Non-trainable state saved with checkpoints (e.g. running statistics)"""
        self._buffers[name] = value

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def named_children(self) -> Iterator[Tuple[str, "BaseModule"]]:
        for name, value in vars(self).items():
            if isinstance(value, BaseModule):
                yield name, value
            elif isinstance(value, ModuleList):
                for index, child in enumerate(value):
                    yield f"{name}.{index}", child

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield f"{prefix}{name}", value
        for name, child in self.named_children():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()], dtype=np.int64))

    def train(self, mode: bool = True) -> "BaseModule":
        self.mode = ModuleMode.TRAIN if mode else ModuleMode.EVAL
        for _, child in self.named_children():
            child.train(mode)
        return self

    def eval(self) -> "BaseModule":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def to(self, dtype: Any) -> "BaseModule":
        """Cast parameters and buffers in place (64-bit for gradient checks)"""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype: Any) -> None:
        for name in list(self._buffers):
            self._buffers[name] = self._buffers[name].astype(dtype)
        for _, child in self.named_children():
            child._cast_buffers(dtype)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer keyed by dotted name"""
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Restore parameters and buffers.

        Raises:
            ShapeError: If a name is missing, unexpected or has the wrong shape
        """
        expected = set(self.state_dict_names())
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise ShapeError("state does not match module", missing=missing[:5], unexpected=unexpected[:5])
        for name, param in self.named_parameters():
            self._check_shape(name, param.data, state[name])
            param.data = np.array(state[name], dtype=param.data.dtype, copy=True)
        for name, buf in self.named_buffers():
            self._check_shape(name, buf, state[name])
            buf[...] = state[name]

    def state_dict_names(self) -> List[str]:
        return [n for n, _ in self.named_parameters()] + [n for n, _ in self.named_buffers()]

    @staticmethod
    def _check_shape(name: str, current: np.ndarray, incoming: np.ndarray) -> None:
        if current.shape != np.shape(incoming):
            raise ShapeError(f"shape mismatch for {name}", expected=current.shape, got=np.shape(incoming))


class ModuleList(list):
    """Ordered container of child modules"""
