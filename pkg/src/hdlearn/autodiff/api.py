"""Differentiation entry points."""

import numpy as np

from .program import Program, trace
from .tape import Dual, Var, current_tape


def grad_state(f, z, mode="auto"):
    """Gradient of scalar f with respect to the state coordinates z.

    Inside an active trace this runs forward-mode with one dual tangent per
    coordinate of z, so the result stays differentiable with respect to any
    parameters f closes over. With no active trace, f is traced at z and a
    compiled sweep evaluates the gradient: mode "reverse" (default, one
    adjoint sweep) or "forward" (one tangent per coordinate); both produce
    the same derivative of the same recorded computation.
    """
    if current_tape() is not None:
        duals = Dual.seed(list(z))
        out = f(duals)
        if isinstance(out, Dual):
            return list(out.tangent)
        return [0.0] * len(z)
    z = np.asarray(z, dtype=np.float64)
    prog, _ = trace(f, z)
    if mode == "forward":
        return prog.grad_forward(z)
    return prog.grad(z)


def value_and_grad_state(f, z, mode="auto"):
    if current_tape() is not None:
        duals = Dual.seed(list(z))
        out = f(duals)
        if isinstance(out, Dual):
            return out.value, list(out.tangent)
        return out, [0.0] * len(z)
    z = np.asarray(z, dtype=np.float64)
    prog, _ = trace(f, z)
    if mode == "forward":
        val = prog(z)
        return val, prog.grad_forward(z)
    return prog.value_and_grad(z)


def grad_params(loss_fn, theta):
    """Reverse-mode gradient of a scalar loss over a flat parameter vector.

    The recorded computation may itself contain grad_state calls and
    integrator steps; their forward-mode tangents are ordinary tape nodes,
    so one reverse sweep yields the full second-order gradient.
    """
    return value_and_grad_params(loss_fn, theta)[1]


def value_and_grad_params(loss_fn, theta):
    theta = np.asarray(theta, dtype=np.float64)
    prog, _ = trace(loss_fn, theta)
    return prog.value_and_grad(theta)


__all__ = ["grad_state", "grad_params", "value_and_grad_state",
           "value_and_grad_params", "trace", "Program", "Dual", "Var"]
