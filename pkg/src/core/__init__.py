"""
Core tensor engine, module contract and shared services
"""

from .errors import AsdError
from .module_interface import BaseModule, ModuleMode, Parameter
from .tensor import ComputationRecord, Function, Tensor, backward, no_grad, precision

__all__ = [
    "AsdError",
    "BaseModule",
    "ComputationRecord",
    "Function",
    "ModuleMode",
    "Parameter",
    "Tensor",
    "backward",
    "no_grad",
    "precision",
]
