"""Frozen tapes ready for repeated execution."""

import numpy as np

from . import backend
from .tape import Tape, Var
from ..errors import NonFiniteError


class Program:
    """A finished tape plus output ids, executable through the active backend.

    Inputs occupy node ids [0, n_inputs); `rewrite` calls may overwrite any
    contiguous run of them. Buffers are reused across calls, so a Program is
    cheap to call in a loop but must not be shared across threads.
    """

    def __init__(self, tape: Tape, outputs):
        if isinstance(outputs, Var):
            outputs = [outputs]
        self.n_inputs = tape.n_inputs
        self.n_nodes = len(tape.values)
        self.codes = np.asarray(tape.codes, dtype=np.int32)
        self.offs = np.asarray(tape.offs, dtype=np.int64)
        self.args = np.asarray(tape.args, dtype=np.int32)
        self.argaux = np.asarray(tape.argaux, dtype=np.float64)
        self.aux = np.asarray(tape.aux, dtype=np.float64)
        self.out_ids = np.asarray([o.id for o in outputs], dtype=np.int64)
        self._values = np.asarray(tape.values, dtype=np.float64)
        self._adj = np.zeros(self.n_nodes)
        if self.args.size == 0:
            # keep memoryview kernels happy on empty tapes
            self.args = np.zeros(1, dtype=np.int32)
            self.argaux = np.zeros(1, dtype=np.float64)

    @property
    def n_outputs(self):
        return len(self.out_ids)

    def _run_forward(self):
        backend.kernel.forward(self.codes, self.offs, self.args, self.argaux,
                               self.aux, self._values, self.n_inputs)

    def __call__(self, x):
        """Evaluate outputs at input vector x."""
        v = self._values
        v[: self.n_inputs] = x
        self._run_forward()
        out = v[self.out_ids].copy()
        return out if len(out) > 1 else float(out[0])

    def value_and_grad(self, x, output=0):
        """Output value and its gradient w.r.t. all inputs (reverse sweep)."""
        v = self._values
        a = self._adj
        val = backend.kernel.eval_and_grad(
            self.codes, self.offs, self.args, self.argaux, self.aux,
            v, a, np.asarray(x, dtype=np.float64), int(self.out_ids[output]),
            self.n_inputs)
        return float(val), a[: self.n_inputs].copy()

    def grad(self, x, output=0):
        return self.value_and_grad(x, output)[1]

    def outputs_and_grad(self, x, output=0):
        """All output values plus the gradient of the selected output."""
        _, grad = self.value_and_grad(x, output)
        return self._values[self.out_ids].copy(), grad

    def grad_forward(self, x, output=0):
        """Gradient via forward sweeps, one tangent per input coordinate."""
        v = self._values
        v[: self.n_inputs] = x
        self._run_forward()
        tang = np.zeros((self.n_nodes, self.n_inputs))
        np.fill_diagonal(tang[: self.n_inputs], 1.0)
        backend.kernel.forward_tangent(self.codes, self.offs, self.args,
                                       self.argaux, self.aux, v, tang,
                                       self.n_inputs)
        return tang[self.out_ids[output]].copy()

    def run_rows(self, rows, row_lo=0):
        """Evaluate outputs for each row, rewriting inputs [row_lo, row_lo+m)."""
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        outs = np.empty((rows.shape[0], len(self.out_ids)))
        backend.kernel.run_rows(self.codes, self.offs, self.args, self.argaux,
                                self.aux, self._values, row_lo, rows,
                                self.out_ids, outs, self.n_inputs)
        return outs

    def set_inputs(self, lo, values):
        """Persistently write a block of input slots (e.g. parameters)."""
        self._values[lo: lo + len(values)] = values

    def batch_mean_and_grad(self, data_lo, rows, grad_n, output=0):
        """Mean over rows of the output and of its gradient w.r.t. inputs [0, grad_n).

        Inputs outside the rewritten block keep whatever `set_inputs` left.
        """
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        grad = np.empty(grad_n)
        total = backend.kernel.batch_reduce_grad(
            self.codes, self.offs, self.args, self.argaux, self.aux,
            self._values, self._adj, data_lo, rows, int(self.out_ids[output]),
            grad_n, grad, self.n_inputs)
        b = rows.shape[0]
        if not np.isfinite(total):
            raise NonFiniteError("non-finite loss in batched evaluation")
        return total / b, grad / b


def trace(fn, x0):
    """Trace fn over fresh inputs holding x0; returns (Program, output values).

    fn receives a list of Vars and returns a Var or a sequence of Vars;
    non-Var (constant) outputs are materialized as constant nodes.
    """
    tape = Tape()
    xs = tape.inputs(float(v) for v in x0)
    with tape:
        out = fn(xs)
    single = isinstance(out, Var) or not hasattr(out, "__len__")
    outs = [out] if single else list(out)
    for i, o in enumerate(outs):
        if not isinstance(o, Var):
            outs[i] = tape.linear([], [], float(o))
    prog = Program(tape, outs)
    vals = [o.value for o in outs]
    return prog, (vals[0] if single else vals)
