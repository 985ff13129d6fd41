"""Scalar math that works uniformly on floats, tape Vars, and forward Duals.

Physics and model code is written against this vocabulary once and can then
be evaluated plainly, traced onto a tape, or forward-differentiated. Float
reductions (`ssum`, `dot`) use correctly-rounded summation so pure-float
evaluations are independent of term order; tape reductions are single SUM/DOT
nodes with sequential semantics.
"""

import math

from .tape import Dual, Var, _nz


def squareplus(x):
    """sp(x) = (x + sqrt(x^2 + 4)) / 2; smooth, positive, sp(0) = 1."""
    if isinstance(x, Dual):
        v = squareplus(x.value)
        s = sqrt(x.value * x.value + 4.0)
        g = v / s
        return Dual(v, [g * t if _nz(t) else 0.0 for t in x.tangent])
    if isinstance(x, Var):
        return x.tape.squareplus(x)
    s = math.sqrt(x * x + 4.0)
    return 0.5 * (x + s) if x >= 0.0 else 2.0 / (s - x)


def sqrt(x):
    if isinstance(x, Dual):
        v = sqrt(x.value)
        g = 0.5 / v
        return Dual(v, [g * t if _nz(t) else 0.0 for t in x.tangent])
    if isinstance(x, Var):
        return x.tape.sqrt(x)
    return math.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        v = exp(x.value)
        return Dual(v, [v * t if _nz(t) else 0.0 for t in x.tangent])
    if isinstance(x, Var):
        return x.tape.exp(x)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        v = log(x.value)
        return Dual(v, [t / x.value if _nz(t) else 0.0 for t in x.tangent])
    if isinstance(x, Var):
        return x.tape.log(x)
    return math.log(x)


def powi(x, k):
    """Integer power; dispatches like the other primitives."""
    k = int(k)
    if isinstance(x, (Dual, Var)):
        return x ** k
    return x ** k


def ssum(xs):
    """Sum of a sequence of scalar-likes."""
    xs = list(xs)
    if not xs:
        return 0.0
    if any(isinstance(x, Dual) for x in xs):
        width = next(len(x.tangent) for x in xs if isinstance(x, Dual))
        xs = [Dual.lift(x, width) for x in xs]
        tan = []
        for q in range(width):
            terms = [x.tangent[q] for x in xs if _nz(x.tangent[q])]
            tan.append(ssum(terms) if terms else 0.0)
        return Dual(ssum([x.value for x in xs]), tan)
    vars_ = [x for x in xs if isinstance(x, Var)]
    if vars_:
        consts = math.fsum(float(x) for x in xs if not isinstance(x, Var))
        if len(vars_) == 1:
            s = vars_[0]
        else:
            s = vars_[0].tape.vsum(vars_)
        return s + consts if consts != 0.0 else s
    return math.fsum(xs)


def dot(xs, ys):
    """Inner product of two equal-length sequences of scalar-likes."""
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise ValueError("dot: length mismatch")
    if not xs:
        return 0.0
    if any(isinstance(v, Dual) for v in xs + ys):
        width = next(len(v.tangent) for v in xs + ys if isinstance(v, Dual))
        xs = [Dual.lift(x, width) for x in xs]
        ys = [Dual.lift(y, width) for y in ys]
        xv = [x.value for x in xs]
        yv = [y.value for y in ys]
        val = dot(xv, yv)
        tan = []
        for q in range(width):
            a, b = [], []
            for x, y in zip(xs, ys):
                if _nz(x.tangent[q]):
                    a.append(x.tangent[q])
                    b.append(y.value)
                if _nz(y.tangent[q]):
                    a.append(y.tangent[q])
                    b.append(x.value)
            tan.append(dot(a, b) if a else 0.0)
        return Dual(val, tan)
    if any(isinstance(v, Var) for v in xs + ys):
        pair_vv = [(x, y) for x, y in zip(xs, ys)
                   if isinstance(x, Var) and isinstance(y, Var)]
        lin_vars, lin_coef = [], []
        const = 0.0
        for x, y in zip(xs, ys):
            xv, yv = isinstance(x, Var), isinstance(y, Var)
            if xv and yv:
                continue
            elif xv:
                lin_vars.append(x)
                lin_coef.append(float(y))
            elif yv:
                lin_vars.append(y)
                lin_coef.append(float(x))
            else:
                const += float(x) * float(y)
        terms = []
        if pair_vv:
            tape = pair_vv[0][0].tape
            terms.append(tape.vdot([p[0] for p in pair_vv], [p[1] for p in pair_vv]))
        if lin_vars:
            terms.append(lin_vars[0].tape.linear(lin_vars, lin_coef, const))
            const = 0.0
        out = terms[0] if terms else 0.0
        for t in terms[1:]:
            out = out + t
        return out + const if const != 0.0 else out
    return math.fsum(x * y for x, y in zip(xs, ys))


def norm(xs):
    """Euclidean norm of a sequence."""
    return sqrt(dot(xs, xs))


def concat(*seqs):
    out = []
    for s in seqs:
        out.extend(s)
    return out


def matvec(w, x, b=None):
    """Rows of w dotted with x, plus optional bias; w is a sequence of rows."""
    out = [dot(row, x) for row in w]
    if b is not None:
        out = [o + bi for o, bi in zip(out, b)]
    return out


def matmul(a, b_cols):
    """Matrix product where b_cols is given column-wise; returns rows."""
    return [[dot(row, col) for col in b_cols] for row in a]


def segment_sum(values, segment_ids, n_segments):
    """Sum `values` into `n_segments` buckets keyed by segment_ids."""
    buckets = [[] for _ in range(n_segments)]
    for v, s in zip(values, segment_ids):
        buckets[int(s)].append(v)
    return [ssum(b) if b else 0.0 for b in buckets]


def minimum_image(dx, box):
    """Wrap a displacement component into [-box/2, box/2).

    For Var/Dual inputs the wrap offset is frozen at the traced value, so the
    derivative is the identity (the wrap is piecewise constant).
    """
    if isinstance(dx, Dual):
        shift = box * math.floor(float(dx.value) / box + 0.5)
        return dx - shift if shift != 0.0 else dx
    if isinstance(dx, Var):
        shift = box * math.floor(dx.value / box + 0.5)
        return dx - shift if shift != 0.0 else dx
    return dx - box * math.floor(dx / box + 0.5)


def value_of(x):
    """Plain float value of a float, Var, or Dual."""
    if isinstance(x, Dual):
        return value_of(x.value)
    if isinstance(x, Var):
        return x.value
    return float(x)
