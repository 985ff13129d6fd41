# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape executors; see pykernel.py for the reference semantics."""

from libc.math cimport sqrt, exp, log, pow
from libc.string cimport memset

COMPILED = True


cdef inline double _eval_op(int c, Py_ssize_t o, Py_ssize_t o1, int * args,
                            double * argaux, double a, double[:] v) nogil:
    # a = aux[i]; returns the node value.
    cdef double r, x, s
    cdef Py_ssize_t j, m
    if c == 0:
        return v[args[o]] + v[args[o + 1]]
    elif c == 1:
        return v[args[o]] - v[args[o + 1]]
    elif c == 2:
        return v[args[o]] * v[args[o + 1]]
    elif c == 3:
        return v[args[o]] / v[args[o + 1]]
    elif c == 4:
        return v[args[o]] + a
    elif c == 5:
        return v[args[o]] * a
    elif c == 6:
        return v[args[o]] / a
    elif c == 7:
        return a / v[args[o]]
    elif c == 8:
        return pow(v[args[o]], a)
    elif c == 9:
        return sqrt(v[args[o]])
    elif c == 10:
        return exp(v[args[o]])
    elif c == 11:
        return log(v[args[o]])
    elif c == 12:
        x = v[args[o]]
        s = sqrt(x * x + 4.0)
        if x >= 0.0:
            return 0.5 * (x + s)
        return 2.0 / (s - x)
    elif c == 13:
        r = 0.0
        for j in range(o, o1):
            r += v[args[j]]
        return r
    elif c == 14:
        m = (o1 - o) // 2
        r = 0.0
        for j in range(m):
            r += v[args[o + j]] * v[args[o + m + j]]
        return r
    else:
        r = a
        for j in range(o, o1):
            r += argaux[j] * v[args[j]]
        return r


cdef void _forward(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
                   double[:] aux, double[:] values, Py_ssize_t n_inputs) nogil:
    cdef Py_ssize_t i, n = codes.shape[0]
    cdef int * ap = &args[0] if args.shape[0] > 0 else NULL
    cdef double * xp = &argaux[0] if argaux.shape[0] > 0 else NULL
    for i in range(n):
        values[n_inputs + i] = _eval_op(codes[i], offs[i], offs[i + 1], ap, xp,
                                        aux[i], values)


cdef void _reverse(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
                   double[:] aux, double[:] values, double[:] adj,
                   Py_ssize_t n_inputs) nogil:
    cdef Py_ssize_t i, j, o, o1, m
    cdef int c
    cdef double g, b, x
    cdef double[:] v = values
    for i in range(codes.shape[0] - 1, -1, -1):
        g = adj[n_inputs + i]
        if g == 0.0:
            continue
        c = codes[i]
        o = offs[i]
        o1 = offs[i + 1]
        if c == 0:
            adj[args[o]] += g
            adj[args[o + 1]] += g
        elif c == 1:
            adj[args[o]] += g
            adj[args[o + 1]] -= g
        elif c == 2:
            adj[args[o]] += g * v[args[o + 1]]
            adj[args[o + 1]] += g * v[args[o]]
        elif c == 3:
            b = v[args[o + 1]]
            adj[args[o]] += g / b
            adj[args[o + 1]] -= g * v[n_inputs + i] / b
        elif c == 4:
            adj[args[o]] += g
        elif c == 5:
            adj[args[o]] += g * aux[i]
        elif c == 6:
            adj[args[o]] += g / aux[i]
        elif c == 7:
            adj[args[o]] -= g * v[n_inputs + i] / v[args[o]]
        elif c == 8:
            adj[args[o]] += g * aux[i] * pow(v[args[o]], aux[i] - 1.0)
        elif c == 9:
            adj[args[o]] += g * 0.5 / v[n_inputs + i]
        elif c == 10:
            adj[args[o]] += g * v[n_inputs + i]
        elif c == 11:
            adj[args[o]] += g / v[args[o]]
        elif c == 12:
            x = v[args[o]]
            adj[args[o]] += g * v[n_inputs + i] / sqrt(x * x + 4.0)
        elif c == 13:
            for j in range(o, o1):
                adj[args[j]] += g
        elif c == 14:
            m = (o1 - o) // 2
            for j in range(m):
                adj[args[o + j]] += g * v[args[o + m + j]]
                adj[args[o + m + j]] += g * v[args[o + j]]
        else:
            for j in range(o, o1):
                adj[args[j]] += g * argaux[j]


def forward(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
            double[:] aux, double[:] values, Py_ssize_t n_inputs):
    _forward(codes, offs, args, argaux, aux, values, n_inputs)


def reverse(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
            double[:] aux, double[:] values, double[:] adj, Py_ssize_t n_inputs):
    _reverse(codes, offs, args, argaux, aux, values, adj, n_inputs)


def forward_tangent(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
                    double[:] aux, double[:] values, double[:, ::1] tang,
                    Py_ssize_t n_inputs):
    cdef Py_ssize_t i, j, q, o, o1, m, out, a, b
    cdef Py_ssize_t K = tang.shape[1]
    cdef int c
    cdef double p, x, acc
    cdef double[:] v = values
    for i in range(codes.shape[0]):
        c = codes[i]
        o = offs[i]
        o1 = offs[i + 1]
        out = n_inputs + i
        if c == 0:
            a = args[o]
            b = args[o + 1]
            for q in range(K):
                tang[out, q] = tang[a, q] + tang[b, q]
        elif c == 1:
            a = args[o]
            b = args[o + 1]
            for q in range(K):
                tang[out, q] = tang[a, q] - tang[b, q]
        elif c == 2:
            a = args[o]
            b = args[o + 1]
            for q in range(K):
                tang[out, q] = tang[a, q] * v[b] + tang[b, q] * v[a]
        elif c == 3:
            a = args[o]
            b = args[o + 1]
            for q in range(K):
                tang[out, q] = (tang[a, q] - v[out] * tang[b, q]) / v[b]
        elif c == 4:
            a = args[o]
            for q in range(K):
                tang[out, q] = tang[a, q]
        elif c == 5:
            a = args[o]
            for q in range(K):
                tang[out, q] = tang[a, q] * aux[i]
        elif c == 6:
            a = args[o]
            for q in range(K):
                tang[out, q] = tang[a, q] / aux[i]
        elif c == 7:
            a = args[o]
            for q in range(K):
                tang[out, q] = -tang[a, q] * v[out] / v[a]
        elif c == 8:
            a = args[o]
            p = aux[i] * pow(v[a], aux[i] - 1.0)
            for q in range(K):
                tang[out, q] = p * tang[a, q]
        elif c == 9:
            a = args[o]
            p = 0.5 / v[out]
            for q in range(K):
                tang[out, q] = p * tang[a, q]
        elif c == 10:
            a = args[o]
            for q in range(K):
                tang[out, q] = v[out] * tang[a, q]
        elif c == 11:
            a = args[o]
            for q in range(K):
                tang[out, q] = tang[a, q] / v[a]
        elif c == 12:
            a = args[o]
            x = v[a]
            p = v[out] / sqrt(x * x + 4.0)
            for q in range(K):
                tang[out, q] = p * tang[a, q]
        elif c == 13:
            for q in range(K):
                acc = 0.0
                for j in range(o, o1):
                    acc += tang[args[j], q]
                tang[out, q] = acc
        elif c == 14:
            m = (o1 - o) // 2
            for q in range(K):
                acc = 0.0
                for j in range(m):
                    acc += tang[args[o + j], q] * v[args[o + m + j]]
                    acc += tang[args[o + m + j], q] * v[args[o + j]]
                tang[out, q] = acc
        else:
            for q in range(K):
                acc = 0.0
                for j in range(o, o1):
                    acc += argaux[j] * tang[args[j], q]
                tang[out, q] = acc


def eval_and_grad(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
                  double[:] aux, double[:] values, double[:] adj, double[:] x,
                  Py_ssize_t out_node, Py_ssize_t n_inputs):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        values[i] = x[i]
    _forward(codes, offs, args, argaux, aux, values, n_inputs)
    memset(&adj[0], 0, adj.shape[0] * sizeof(double))
    adj[out_node] = 1.0
    _reverse(codes, offs, args, argaux, aux, values, adj, n_inputs)
    return values[out_node]


def run_rows(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
             double[:] aux, double[:] values, Py_ssize_t row_lo,
             double[:, :] rows, long long[:] out_ids, double[:, :] outs,
             Py_ssize_t n_inputs):
    cdef Py_ssize_t b, j
    cdef Py_ssize_t B = rows.shape[0]
    cdef Py_ssize_t m = rows.shape[1]
    for b in range(B):
        for j in range(m):
            values[row_lo + j] = rows[b, j]
        _forward(codes, offs, args, argaux, aux, values, n_inputs)
        for j in range(out_ids.shape[0]):
            outs[b, j] = values[out_ids[j]]


def batch_reduce_grad(int[:] codes, long long[:] offs, int[:] args, double[:] argaux,
                      double[:] aux, double[:] values, double[:] adj,
                      Py_ssize_t data_lo, double[:, :] rows, Py_ssize_t out_node,
                      Py_ssize_t grad_n, double[:] grad_out, Py_ssize_t n_inputs):
    cdef Py_ssize_t b, j
    cdef Py_ssize_t B = rows.shape[0]
    cdef Py_ssize_t m = rows.shape[1]
    cdef double total = 0.0
    for j in range(grad_n):
        grad_out[j] = 0.0
    for b in range(B):
        for j in range(m):
            values[data_lo + j] = rows[b, j]
        _forward(codes, offs, args, argaux, aux, values, n_inputs)
        total += values[out_node]
        memset(&adj[0], 0, adj.shape[0] * sizeof(double))
        adj[out_node] = 1.0
        _reverse(codes, offs, args, argaux, aux, values, adj, n_inputs)
        for j in range(grad_n):
            grad_out[j] += adj[j]
    return total
