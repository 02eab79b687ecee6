"""
AdamW
Adam with decoupled weight decay over named parameters
"""

import logging
from typing import Dict, Mapping, Tuple

import numpy as np

from ..core.module_interface import Parameter

logger = logging.getLogger(__name__)


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One AdamW update for a single tensor.

    Decay multiplies the weights by (1 − lr·wd) before the Adam step and
    never passes through the moment estimates.

    Args:
        step: 1-based step count used for bias correction

    Returns:
        (param, m, v) after the update
    """
    beta1, beta2 = betas
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    param = param * (1.0 - lr * weight_decay)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class AdamW:
    """Optimizer state (first/second moments, step count) for a fixed set of named parameters"""

    def __init__(self, parameters: Mapping[str, Parameter], lr: float, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.parameters = dict(parameters)
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in self.parameters.items()}
        self.v: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in self.parameters.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.step_count += 1
        for name, param in self.parameters.items():
            grad = grads.get(name)
            if grad is None:
                grad = np.zeros_like(param.data)
            param.data, self.m[name], self.v[name] = adamw_step(
                param.data, grad.astype(param.data.dtype, copy=False), self.m[name], self.v[name],
                self.step_count, self.lr, self.betas, self.eps, self.weight_decay,
            )

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"m/{n}": a for n, a in self.m.items()}
        state.update({f"v/{n}": a for n, a in self.v.items()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], step_count: int) -> None:
        for name in self.parameters:
            self.m[name] = np.array(state[f"m/{name}"], copy=True)
            self.v[name] = np.array(state[f"v/{name}"], copy=True)
        self.step_count = step_count
