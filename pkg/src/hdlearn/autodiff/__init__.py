"""Scalar-tape automatic differentiation with compiled execution kernels."""

from .api import (grad_params, grad_state, trace, value_and_grad_params,
                  value_and_grad_state)
from .backend import COMPILED, backend_name
from .program import Program
from .tape import Dual, Tape, Var, current_tape
from . import ops

__all__ = [
    "grad_state", "grad_params", "value_and_grad_state", "value_and_grad_params",
    "trace", "Program", "Tape", "Var", "Dual", "current_tape",
    "COMPILED", "backend_name", "ops",
]
