"""Pure-Python tape executors.

Fallback backend with the same call surface as the compiled `_ckernel`
extension; selected when the extension is unavailable or when
HDLEARN_PURE_PYTHON is set. Formulas match the compiled kernels exactly so
both backends produce identical floating-point results.
"""

import math

COMPILED = False


def forward(codes, offs, args, argaux, aux, values, n_inputs):
    v = values
    k = n_inputs
    for i in range(len(codes)):
        c = codes[i]
        o = offs[i]
        if c == 0:
            r = v[args[o]] + v[args[o + 1]]
        elif c == 1:
            r = v[args[o]] - v[args[o + 1]]
        elif c == 2:
            r = v[args[o]] * v[args[o + 1]]
        elif c == 3:
            r = v[args[o]] / v[args[o + 1]]
        elif c == 4:
            r = v[args[o]] + aux[i]
        elif c == 5:
            r = v[args[o]] * aux[i]
        elif c == 6:
            r = v[args[o]] / aux[i]
        elif c == 7:
            r = aux[i] / v[args[o]]
        elif c == 8:
            r = pow(v[args[o]], aux[i])
        elif c == 9:
            r = math.sqrt(v[args[o]])
        elif c == 10:
            r = math.exp(v[args[o]])
        elif c == 11:
            r = math.log(v[args[o]])
        elif c == 12:
            x = v[args[o]]
            s = math.sqrt(x * x + 4.0)
            r = 0.5 * (x + s) if x >= 0.0 else 2.0 / (s - x)
        elif c == 13:
            r = 0.0
            for j in range(o, offs[i + 1]):
                r += v[args[j]]
        elif c == 14:
            o1 = offs[i + 1]
            m = (o1 - o) // 2
            r = 0.0
            for j in range(m):
                r += v[args[o + j]] * v[args[o + m + j]]
        else:  # OP_LIN
            r = aux[i]
            for j in range(o, offs[i + 1]):
                r += argaux[j] * v[args[j]]
        v[k] = r
        k += 1


def reverse(codes, offs, args, argaux, aux, values, adj, n_inputs):
    """Adjoint sweep; caller zeroes `adj` and seeds the output node."""
    v = values
    for i in range(len(codes) - 1, -1, -1):
        g = adj[n_inputs + i]
        if g == 0.0:
            continue
        c = codes[i]
        o = offs[i]
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
            adj[args[o]] += g * v[n_inputs + i] / math.sqrt(x * x + 4.0)
        elif c == 13:
            for j in range(o, offs[i + 1]):
                adj[args[j]] += g
        elif c == 14:
            o1 = offs[i + 1]
            m = (o1 - o) // 2
            for j in range(m):
                adj[args[o + j]] += g * v[args[o + m + j]]
                adj[args[o + m + j]] += g * v[args[o + j]]
        else:  # OP_LIN
            for j in range(o, offs[i + 1]):
                adj[args[j]] += g * argaux[j]


def forward_tangent(codes, offs, args, argaux, aux, values, tang, n_inputs):
    """Propagate K tangent columns; input rows of `tang` are pre-seeded."""
    v = values
    K = tang.shape[1]
    for i in range(len(codes)):
        c = codes[i]
        o = offs[i]
        out = n_inputs + i
        if c == 0:
            for q in range(K):
                tang[out, q] = tang[args[o], q] + tang[args[o + 1], q]
        elif c == 1:
            for q in range(K):
                tang[out, q] = tang[args[o], q] - tang[args[o + 1], q]
        elif c == 2:
            a, b = args[o], args[o + 1]
            for q in range(K):
                tang[out, q] = tang[a, q] * v[b] + tang[b, q] * v[a]
        elif c == 3:
            a, b = args[o], args[o + 1]
            for q in range(K):
                tang[out, q] = (tang[a, q] - v[out] * tang[b, q]) / v[b]
        elif c == 4:
            for q in range(K):
                tang[out, q] = tang[args[o], q]
        elif c == 5:
            for q in range(K):
                tang[out, q] = tang[args[o], q] * aux[i]
        elif c == 6:
            for q in range(K):
                tang[out, q] = tang[args[o], q] / aux[i]
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
            p = v[out] / math.sqrt(x * x + 4.0)
            for q in range(K):
                tang[out, q] = p * tang[a, q]
        elif c == 13:
            o1 = offs[i + 1]
            for q in range(K):
                acc = 0.0
                for j in range(o, o1):
                    acc += tang[args[j], q]
                tang[out, q] = acc
        elif c == 14:
            o1 = offs[i + 1]
            m = (o1 - o) // 2
            for q in range(K):
                acc = 0.0
                for j in range(m):
                    acc += tang[args[o + j], q] * v[args[o + m + j]]
                    acc += tang[args[o + m + j], q] * v[args[o + j]]
                tang[out, q] = acc
        else:  # OP_LIN
            o1 = offs[i + 1]
            for q in range(K):
                acc = 0.0
                for j in range(o, o1):
                    acc += argaux[j] * tang[args[j], q]
                tang[out, q] = acc


def eval_and_grad(codes, offs, args, argaux, aux, values, adj, x, out_node, n_inputs):
    """Write inputs, run forward then reverse; gradient lands in adj[:n_inputs]."""
    for i in range(len(x)):
        values[i] = x[i]
    forward(codes, offs, args, argaux, aux, values, n_inputs)
    for i in range(len(adj)):
        adj[i] = 0.0
    adj[out_node] = 1.0
    reverse(codes, offs, args, argaux, aux, values, adj, n_inputs)
    return values[out_node]


def run_rows(codes, offs, args, argaux, aux, values, row_lo, rows, out_ids, outs, n_inputs):
    """Evaluate the tape once per row, rewriting inputs [row_lo, row_lo+m)."""
    B, m = rows.shape
    for b in range(B):
        for j in range(m):
            values[row_lo + j] = rows[b, j]
        forward(codes, offs, args, argaux, aux, values, n_inputs)
        for j in range(len(out_ids)):
            outs[b, j] = values[out_ids[j]]


def batch_reduce_grad(codes, offs, args, argaux, aux, values, adj, data_lo, rows,
                      out_node, grad_n, grad_out, n_inputs):
    """Sum of per-row outputs and of per-row gradients w.r.t. inputs [0, grad_n)."""
    B, m = rows.shape
    total = 0.0
    for j in range(grad_n):
        grad_out[j] = 0.0
    for b in range(B):
        for j in range(m):
            values[data_lo + j] = rows[b, j]
        forward(codes, offs, args, argaux, aux, values, n_inputs)
        total += values[out_node]
        for i in range(len(adj)):
            adj[i] = 0.0
        adj[out_node] = 1.0
        reverse(codes, offs, args, argaux, aux, values, adj, n_inputs)
        for j in range(grad_n):
            grad_out[j] += adj[j]
    return total
