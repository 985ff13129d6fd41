"""Graph network that predicts a system's total energy.

Local features (species one-hot, pairwise distance) pass through message
passing; global features (position, velocity) enter only through dedicated
heads, keeping kinetic and potential contributions decoupled:

* per-node kinetic term   tau_i  = sp(MLP_T(h0T_i || v_i))
* per-node potential term v_i    = sp(MLP_v(h0V_i || x_i))
* per-edge potential term v_ij   = sp(MLP_e(z_ij)), z from L rounds of
  message passing over directed edges (each undirected pair materialized
  both ways, so v_ij is a per-directed-edge share).

The forward pass is written against :mod:`hdlearn.autodiff.ops`, so the same
code evaluates plainly (floats, order-free reductions), traces onto a tape
for compiled replay inside integrators, and differentiates to second order
during training.
"""

import base64
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import ops
from .dynamics import HamiltonianField
from .errors import CheckpointError, DomainError
from .state import SystemKind, minimum_image as np_minimum_image

DEFAULT_EMBED = 5
DEFAULT_HIDDEN = 5
DEFAULT_DEPTH = 2   # hidden layers per MLP
DEFAULT_VOCAB = 2


def default_hyper(kind, dim=2):
    kind = SystemKind(kind)
    layers = 2 if kind is SystemKind.PENDULUM else 1
    return {"embed_dim": DEFAULT_EMBED, "hidden": DEFAULT_HIDDEN,
            "depth": DEFAULT_DEPTH, "layers": layers, "dim": dim,
            "vocab": DEFAULT_VOCAB, "kind": kind.value}


def _mlp_shapes(n_in, hidden, depth, n_out):
    shapes = []
    last = n_in
    for _ in range(depth):
        shapes.append((hidden, last))
        last = hidden
    shapes.append((n_out, last))
    return shapes


def _shape_table(hyper):
    e, h, d, dim, vocab = (hyper["embed_dim"], hyper["hidden"], hyper["depth"],
                           hyper["dim"], hyper["vocab"])
    table = {}

    def add_mlp(name, n_in, n_out):
        for i, (rows, cols) in enumerate(_mlp_shapes(n_in, h, d, n_out)):
            table[f"{name}.W{i}"] = (rows, cols)
            table[f"{name}.b{i}"] = (rows,)

    add_mlp("embed_node_T", vocab, e)
    add_mlp("embed_node_V", vocab, e)
    add_mlp("embed_edge", 1, e)
    for l in range(hyper["layers"]):
        table[f"mp{l}.WV"] = (e, 2 * e)
        table[f"mp{l}.WE"] = (e, 2 * e)
        add_mlp(f"mp{l}.node_mlp", e, e)
        add_mlp(f"mp{l}.edge_mlp", e, e)
    add_mlp("head_T", e + dim, 1)
    add_mlp("head_Vnode", e + dim, 1)
    add_mlp("head_Vedge", e, 1)
    return table


@dataclass
class ModelParams:
    """All learnable tensors plus hyperparameters and training metadata."""

    hyper: dict
    weights: dict
    seed: int = 0
    meta: dict = dc_field(default_factory=dict)

    def n_params(self):
        return sum(w.size for w in self.weights.values())

    def flat(self):
        return np.concatenate([self.weights[k].ravel() for k in self.weights])

    def with_flat(self, vec):
        out = {}
        pos = 0
        for k, w in self.weights.items():
            out[k] = np.asarray(vec[pos: pos + w.size], dtype=float).reshape(w.shape)
            pos += w.size
        if pos != len(vec):
            raise ValueError("flat vector length does not match parameter count")
        return ModelParams(hyper=dict(self.hyper), weights=out, seed=self.seed,
                           meta=dict(self.meta))

    def save(self, path):
        doc = {"hyper": self.hyper, "seed": self.seed, "meta": self.meta,
               "weights": {}}
        for k, w in self.weights.items():
            doc["weights"][k] = {
                "shape": list(w.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(w, dtype="<f8").tobytes()).decode(),
            }
        with open(path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        for key in ("hyper", "seed", "weights"):
            if key not in doc:
                raise CheckpointError("checkpoint missing field", field=key)
        expect = _shape_table(doc["hyper"])
        weights = {}
        for name, shape in expect.items():
            if name not in doc["weights"]:
                raise CheckpointError("checkpoint missing weight", field=name)
            entry = doc["weights"][name]
            raw = base64.b64decode(entry["data"])
            arr = np.frombuffer(raw, dtype="<f8").astype(float, copy=True)
            if tuple(entry["shape"]) != shape or arr.size != int(np.prod(shape)):
                raise CheckpointError("weight has wrong shape", field=name)
            weights[name] = arr.reshape(shape)
        return cls(hyper=doc["hyper"], weights=weights, seed=doc["seed"],
                   meta=doc.get("meta", {}))


def init_params(hyper, seed):
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in _shape_table(hyper).items():
        if name.rsplit(".", 1)[-1].startswith("b"):
            weights[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            a = np.sqrt(6.0 / (fan_in + fan_out))
            weights[name] = rng.uniform(-a, a, size=shape)
    return ModelParams(hyper=dict(hyper), weights=weights, seed=seed)


# ---------------------------------------------------------------------------
# forward pass (generic over floats / Vars / Duals)

def one_hot(t, vocab):
    if not 0 <= t < vocab:
        raise DomainError(f"unknown species {t} (vocabulary size {vocab})")
    return [1.0 if q == t else 0.0 for q in range(vocab)]


def _mlp(weights, name, depth, x):
    for i in range(depth + 1):
        x = ops.matvec(weights[f"{name}.W{i}"], x, weights[f"{name}.b{i}"])
        if i < depth:
            x = [ops.squareplus(u) for u in x]
    return x


def _sp_vec(x):
    return [ops.squareplus(u) for u in x]


def embed(params, types, distances):
    """Initial embeddings: nodes from species one-hot only, edges from distance.

    Returns (h0T per node, h0V per node, h0 per directed edge); same-type
    nodes share the same embedding object.
    """
    w = params.weights
    d = params.hyper["depth"]
    vocab = params.hyper["vocab"]
    cache_t, cache_v = {}, {}
    h0t, h0v = [], []
    for t in types:
        t = int(t)
        if t not in cache_t:
            oh = one_hot(t, vocab)
            cache_t[t] = _sp_vec(_mlp(w, "embed_node_T", d, oh))
            cache_v[t] = _sp_vec(_mlp(w, "embed_node_V", d, oh))
        h0t.append(cache_t[t])
        h0v.append(cache_v[t])
    h0e = [_sp_vec(_mlp(w, "embed_edge", d, [dist])) for dist in distances]
    return h0t, h0v, h0e


def message_pass(params, h_nodes, h_edges, edges, n):
    """L rounds of simultaneous node/edge updates over directed edges.

    Node i receives W_V (h_j || h_ij) from each incoming edge (i, j)."""
    w = params.weights
    depth = params.hyper["depth"]
    for l in range(params.hyper["layers"]):
        wv = w[f"mp{l}.WV"]
        we = w[f"mp{l}.WE"]
        incoming = [[] for _ in range(n)]
        for e, (i, j) in enumerate(edges):
            incoming[i].append(ops.matvec(wv, ops.concat(h_nodes[j], h_edges[e])))
        new_nodes = []
        for i in range(n):
            agg = h_nodes[i]
            if incoming[i]:
                agg = [ops.ssum([agg[q]] + [m[q] for m in incoming[i]])
                       for q in range(len(agg))]
            new_nodes.append(_sp_vec(_mlp(w, f"mp{l}.node_mlp", depth, agg)))
        new_edges = []
        for e, (i, j) in enumerate(edges):
            lift = ops.matvec(we, ops.concat(h_nodes[i], h_nodes[j]))
            agg = [h_edges[e][q] + lift[q] for q in range(len(lift))]
            new_edges.append(_sp_vec(_mlp(w, f"mp{l}.edge_mlp", depth, agg)))
        h_nodes, h_edges = new_nodes, new_edges
    return h_nodes, h_edges


def kinetic_head(params, h0t_i, v_i):
    """tau_i = sp(MLP_T(h0_i || v_i)); positive by construction."""
    out = _mlp(params.weights, "head_T", params.hyper["depth"],
               ops.concat(h0t_i, v_i))
    return ops.squareplus(out[0])


def node_potential_head(params, h0v_i, x_i):
    out = _mlp(params.weights, "head_Vnode", params.hyper["depth"],
               ops.concat(h0v_i, x_i))
    return ops.squareplus(out[0])


def edge_potential_head(params, z_e):
    out = _mlp(params.weights, "head_Vedge", params.hyper["depth"], z_e)
    return ops.squareplus(out[0])


def directed_edges(undirected):
    out = []
    for i, j in undirected:
        out.append((i, j))
        out.append((j, i))
    return tuple(out)


def build_edges(spec, x=None):
    """Directed edge list for a spec; cutoff neighbor pairs for the periodic
    mixture (rebuilt from positions at every evaluation), static otherwise."""
    if spec.kind is not SystemKind.BINARY_LJ:
        return directed_edges(spec.edges)
    if x is None:
        raise DomainError("periodic mixture needs positions to build its edges")
    box = spec.constants["box"]
    ii, jj = np.triu_indices(spec.n, k=1)
    d = np_minimum_image(np.asarray(x)[ii] - np.asarray(x)[jj], box)
    r2 = np.sum(d * d, axis=1)
    cut = np.empty(len(ii))
    ta = np.minimum(spec.types[ii], spec.types[jj])
    tb = np.maximum(spec.types[ii], spec.types[jj])
    for (a, b) in ((0, 0), (0, 1), (1, 1)):
        m = (ta == a) & (tb == b)
        cut[m] = spec.constants[f"cutoff_{a}{b}"]
    keep = r2 < cut ** 2
    return directed_edges(list(zip(ii[keep].tolist(), jj[keep].tolist())))


def _distances(spec, xs, edges):
    """Distance per directed edge; both directions share one value."""
    dim = spec.dim
    box = spec.constants.get("box") if spec.pbc else None
    cache = {}
    out = []
    for i, j in edges:
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            d = [xs[key[0] * dim + q] - xs[key[1] * dim + q] for q in range(dim)]
            if box is not None:
                d = [ops.minimum_image(c, box) for c in d]
            cache[key] = ops.norm(d)
        out.append(cache[key])
    return out


def potential_terms(params, spec, xs, edges, nodes=None):
    """Per-node and per-directed-edge potential contributions."""
    nodes = list(range(spec.n)) if nodes is None else list(nodes)
    dim = spec.dim
    dists = _distances(spec, xs, edges)
    h0t, h0v, h0e = embed(params, [spec.types[i] for i in nodes], dists)
    local = {g: q for q, g in enumerate(nodes)}
    try:
        local_edges = [(local[i], local[j]) for i, j in edges]
    except KeyError as exc:
        raise DomainError(f"edge references node {exc} outside the node subset")
    z_nodes, z_edges = message_pass(params, h0v, h0e, local_edges, len(nodes))
    v_nodes = [node_potential_head(params, h0v[q],
                                   xs[g * dim:(g + 1) * dim])
               for q, g in enumerate(nodes)]
    v_edges = [edge_potential_head(params, z) for z in z_edges]
    return v_nodes, v_edges


def kinetic_terms(params, spec, vs, owned=None):
    """Per-node kinetic contributions over the owned particle set."""
    owned = list(range(spec.n)) if owned is None else list(owned)
    dim = spec.dim
    h0t, _, _ = embed(params, [spec.types[i] for i in owned], [])
    return [kinetic_head(params, h0t[q], vs[g * dim:(g + 1) * dim])
            for q, g in enumerate(owned)]


@dataclass(frozen=True)
class EnergyBreakdown:
    T: float
    tau: tuple
    V_nodes: tuple
    V_edges: tuple
    H: float


def hamiltonian(params, spec, state):
    """Reference evaluation with order-free float reductions; the total is
    exactly permutation invariant."""
    edges = build_edges(spec, state.x)
    xs = [float(c) for c in state.x.ravel()]
    vs = [float(c) for c in state.v.ravel()]
    tau = kinetic_terms(params, spec, vs)
    v_nodes, v_edges = potential_terms(params, spec, xs, edges)
    t_total = ops.ssum(tau)
    h = ops.ssum(tau + v_nodes + v_edges)
    return EnergyBreakdown(T=t_total, tau=tuple(tau), V_nodes=tuple(v_nodes),
                           V_edges=tuple(v_edges), H=h)


# ---------------------------------------------------------------------------
# compiled field

class _TracedEnergy:
    """Trace cache: one compiled program per edge topology.

    Program inputs are the flat state Z = [x; p]; outputs are (T, V, H) and
    gradients come from a reverse sweep, so one trace serves both energy
    series and forces."""

    def __init__(self, entries, spec):
        # entries: list of (params, nodes, undirected edge builder, owned)
        self.entries = entries
        self.spec = spec
        self._cache = {}

    def _signature(self, x):
        if self.spec.kind is SystemKind.BINARY_LJ:
            return build_edges(self.spec, x)
        return None

    def _program(self, x):
        sig = self._signature(x)
        if sig not in self._cache:
            spec = self.spec
            masses = np.asarray(spec.masses)
            nd = spec.n * spec.dim

            def traced(z):
                xs = list(z[:nd])
                vs = [z[nd + q] / masses[q // spec.dim] for q in range(nd)]
                taus, vns, ves = [], [], []
                for params, nodes, edges, owned in self.entries:
                    use_edges = sig if sig is not None else edges
                    vn, ve = potential_terms(params, spec, xs, use_edges, nodes)
                    taus.extend(kinetic_terms(params, spec, vs, owned))
                    vns.extend(vn)
                    ves.extend(ve)
                t = ops.ssum(taus)
                v = ops.ssum(vns + ves)
                return [t, v, t + v]

            z0 = np.concatenate([np.asarray(x, dtype=float).ravel(), np.zeros(nd)])
            prog, _ = ad.trace(traced, z0)
            self._cache[sig] = prog
        return self._cache[sig]

    def program_for(self, state):
        return self._program(state.x)

    def value(self, state):
        return float(self._program(state.x)(state.flat_z())[2])

    def grad_z(self, state):
        prog = self._program(state.x)
        return prog.value_and_grad(state.flat_z(), output=2)[1]


def energy_field(params, spec, entries=None):
    """HamiltonianField whose value/gradients replay a compiled trace."""
    if entries is None:
        edges = (build_edges(spec)
                 if spec.kind is not SystemKind.BINARY_LJ else None)
        entries = [(params, None, edges, None)]
    traced = _TracedEnergy(entries, spec)
    fld = HamiltonianField(value=traced.value, grad_z=traced.grad_z,
                           masses=np.asarray(spec.masses), separable=False)
    object.__setattr__(fld, "traced", traced)
    return fld


def compose_hybrid(models, spec):
    """Superpose sub-system models on one hybrid spec.

    models: list of (params, SubSystem); each contributes its potential over
    its own sub-graph and kinetic energy for the particles it owns. Returns
    (field, constraints). Every particle must have exactly one kinetic owner.
    """
    owned_count = {i: 0 for i in range(spec.n)}
    for _, sub in models:
        for i in sub.kinetic_owned:
            owned_count[i] += 1
    missing = [i for i, c in owned_count.items() if c == 0]
    doubled = [i for i, c in owned_count.items() if c > 1]
    if missing or doubled:
        raise DomainError(
            f"kinetic ownership must partition the particles "
            f"(missing {missing}, duplicated {doubled})")
    entries = [(params, sub.particles, directed_edges(sub.edges),
                sub.kinetic_owned) for params, sub in models]
    from .systems import hybrid_constraints
    constraints = (hybrid_constraints(spec)
                   if spec.kind is SystemKind.HYBRID else None)
    return energy_field(None, spec, entries=entries), constraints
