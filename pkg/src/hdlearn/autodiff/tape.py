"""Scalar operation tape with eager values.

Every scalar operation performed on a :class:`Var` is appended to the owning
:class:`Tape` as one node (opcode, parent ids, optional constants) and its
value is computed immediately, so traced code always sees exact arithmetic.
A finished tape freezes into flat arrays that the execution backends replay
for repeated evaluation, reverse sweeps, tangent sweeps, and batched training.

Forward-mode differentiation happens at trace time through :class:`Dual`,
whose tangent entries are themselves tape variables; a single reverse sweep
over the resulting tape therefore yields reverse-over-forward second-order
gradients with no extra machinery.
"""

import math
import threading

from ..errors import NonFiniteError

OP_ADD = 0    # a + b
OP_SUB = 1    # a - b
OP_MUL = 2    # a * b
OP_DIV = 3    # a / b
OP_ADDC = 4   # a + aux
OP_MULC = 5   # a * aux
OP_DIVC = 6   # a / aux
OP_CDIV = 7   # aux / a
OP_POWI = 8   # a ** int(aux)
OP_SQRT = 9
OP_EXP = 10
OP_LOG = 11
OP_SP = 12    # squareplus
OP_SUM = 13   # sum over args
OP_DOT = 14   # sum(v[args[i]] * v[args[m + i]]), m = len(args) // 2
OP_LIN = 15   # aux + sum(argaux[i] * v[args[i]])

_TRACING = threading.local()


def current_tape():
    """Tape active on this thread, or None when no trace is running."""
    return getattr(_TRACING, "tape", None)


def _squareplus(x):
    # Branch avoids cancellation for large |x|; both forms are the same value.
    s = math.sqrt(x * x + 4.0)
    if x >= 0.0:
        return 0.5 * (x + s)
    return 2.0 / (s - x)


class Var:
    """Handle to one tape node; supports ordinary arithmetic."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape, node_id, value):
        self.tape = tape
        self.id = node_id
        self.value = value

    def __repr__(self):
        return f"Var(id={self.id}, value={self.value!r})"

    def __float__(self):
        return self.value

    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape._emit2(OP_ADD, self, other, self.value + other.value)
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        if c == 0.0:
            return self
        return self.tape._emit1(OP_ADDC, self, c, self.value + c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape._emit2(OP_SUB, self, other, self.value - other.value)
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        if c == 0.0:
            return self
        return self.tape._emit1(OP_ADDC, self, -c, self.value + (-c))

    def __rsub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        neg = self.tape._emit1(OP_MULC, self, -1.0, self.value * -1.0)
        c = float(other)
        if c == 0.0:
            return neg
        return self.tape._emit1(OP_ADDC, neg, c, neg.value + c)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape._emit2(OP_MUL, self, other, self.value * other.value)
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        if c == 1.0:
            return self
        return self.tape._emit1(OP_MULC, self, c, self.value * c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self.tape._emit2(OP_DIV, self, other, self.value / other.value)
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        if c == 1.0:
            return self
        return self.tape._emit1(OP_DIVC, self, c, self.value / c)

    def __rtruediv__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        return self.tape._emit1(OP_CDIV, self, c, c / self.value)

    def __neg__(self):
        return self.tape._emit1(OP_MULC, self, -1.0, self.value * -1.0)

    def __pow__(self, k):
        if not isinstance(k, int):
            if isinstance(k, float) and k.is_integer():
                k = int(k)
            else:
                raise TypeError("tape variables support integer powers only")
        if k == 0:
            return 1.0
        if k == 1:
            return self
        return self.tape._emit1(OP_POWI, self, float(k), self.value ** k)


class Tape:
    """Append-only record of scalar operations over declared inputs."""

    def __init__(self):
        self.codes = []
        self.args = []
        self.offs = [0]
        self.argaux = []
        self.aux = []
        self.values = []
        self.n_inputs = 0
        self._frozen = False

    def __len__(self):
        return len(self.values)

    def input(self, value):
        """Declare a new input slot holding `value`; inputs precede all ops."""
        if self.codes:
            raise RuntimeError("inputs must be declared before any operation")
        v = float(value)
        self.values.append(v)
        self.n_inputs += 1
        return Var(self, self.n_inputs - 1, v)

    def inputs(self, values):
        return [self.input(v) for v in values]

    # -- emission -----------------------------------------------------------

    def _append(self, code, arg_ids, aux, value):
        if value != value or value in (math.inf, -math.inf):
            raise NonFiniteError(f"non-finite intermediate (op {code}): {value}")
        self.codes.append(code)
        self.args.extend(arg_ids)
        self.argaux.extend([0.0] * len(arg_ids))
        self.offs.append(len(self.args))
        self.aux.append(aux)
        self.values.append(value)
        return Var(self, len(self.values) - 1, value)

    def _emit1(self, code, a, aux, value):
        return self._append(code, (a.id,), aux, value)

    def _emit2(self, code, a, b, value):
        return self._append(code, (a.id, b.id), 0.0, value)

    def sqrt(self, a):
        return self._emit1(OP_SQRT, a, 0.0, math.sqrt(a.value))

    def exp(self, a):
        return self._emit1(OP_EXP, a, 0.0, math.exp(a.value))

    def log(self, a):
        return self._emit1(OP_LOG, a, 0.0, math.log(a.value))

    def squareplus(self, a):
        return self._emit1(OP_SP, a, 0.0, _squareplus(a.value))

    def vsum(self, vars_):
        value = 0.0
        for v in vars_:
            value += v.value
        return self._append(OP_SUM, [v.id for v in vars_], 0.0, value)

    def vdot(self, avars, bvars):
        value = 0.0
        for a, b in zip(avars, bvars):
            value += a.value * b.value
        ids = [a.id for a in avars] + [b.id for b in bvars]
        return self._append(OP_DOT, ids, 0.0, value)

    def linear(self, vars_, coeffs, bias=0.0):
        """aux + sum(coeffs[i] * vars_[i]) as a single node."""
        value = bias
        for v, c in zip(vars_, coeffs):
            value += c * v.value
        node = self._append(OP_LIN, [v.id for v in vars_], bias, value)
        off = self.offs[-2]
        for i, c in enumerate(coeffs):
            self.argaux[off + i] = c
        return node

    # -- tracing context ----------------------------------------------------

    def __enter__(self):
        if current_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _TRACING.tape = self
        return self

    def __exit__(self, *exc):
        _TRACING.tape = None
        return False


class Dual:
    """Forward-mode pair: a value and a tuple of tangents.

    Components may be plain floats or :class:`Var`; structural-zero tangents
    are kept as the float 0.0 so unused directions cost nothing.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent):
        self.value = value
        self.tangent = tuple(tangent)

    @staticmethod
    def seed(values, width=None):
        """One Dual per value with unit tangents (identity seeding)."""
        n = len(values)
        width = n if width is None else width
        out = []
        for i, v in enumerate(values):
            t = [0.0] * width
            if i < width:
                t[i] = 1.0
            out.append(Dual(v, t))
        return out

    @staticmethod
    def lift(x, width):
        if isinstance(x, Dual):
            return x
        return Dual(x, (0.0,) * width)

    def _k(self):
        return len(self.tangent)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value,
                        [a + b if (isinstance(a, Var) or isinstance(b, Var) or a != 0.0 or b != 0.0) else 0.0
                         for a, b in zip(self.tangent, other.tangent)])
        return Dual(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value,
                        [a - b if (isinstance(a, Var) or isinstance(b, Var) or a != 0.0 or b != 0.0) else 0.0
                         for a, b in zip(self.tangent, other.tangent)])
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, [-t if _nz(t) else 0.0 for t in self.tangent])

    def __mul__(self, other):
        if isinstance(other, Dual):
            av, bv = self.value, other.value
            tan = []
            for ta, tb in zip(self.tangent, other.tangent):
                za, zb = _nz(ta), _nz(tb)
                if za and zb:
                    tan.append(ta * bv + tb * av)
                elif za:
                    tan.append(ta * bv)
                elif zb:
                    tan.append(tb * av)
                else:
                    tan.append(0.0)
            return Dual(av * bv, tan)
        return Dual(self.value * other, [t * other if _nz(t) else 0.0 for t in self.tangent])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            out = self.value / other.value
            tan = []
            for ta, tb in zip(self.tangent, other.tangent):
                za, zb = _nz(ta), _nz(tb)
                if za and zb:
                    tan.append((ta - out * tb) / other.value)
                elif za:
                    tan.append(ta / other.value)
                elif zb:
                    tan.append(-out * tb / other.value)
                else:
                    tan.append(0.0)
            return Dual(out, tan)
        return Dual(self.value / other, [t / other if _nz(t) else 0.0 for t in self.tangent])

    def __rtruediv__(self, other):
        out = other / self.value
        g = -out / self.value
        return Dual(out, [g * t if _nz(t) else 0.0 for t in self.tangent])

    def __neg__(self):
        return Dual(-self.value, [-t if _nz(t) else 0.0 for t in self.tangent])

    def __pow__(self, k):
        from . import ops
        v = ops.powi(self.value, k)
        g = k * ops.powi(self.value, k - 1)
        return Dual(v, [g * t if _nz(t) else 0.0 for t in self.tangent])


def _nz(t):
    """True when a tangent entry is structurally nonzero."""
    return isinstance(t, Var) or t != 0.0
