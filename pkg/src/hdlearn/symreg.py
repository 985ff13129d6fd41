"""Symbolic distillation of learned energy heads.

A generational GP searches expression trees over {+, *, pow_k} with floating
constants; every candidate's constants are optimized (exact least squares for
top-level linear coefficients, a short coordinate-descent pass for the rest)
before scoring its mean squared error. A Pareto front over (complexity, loss)
is maintained across the whole run, scored by the discrete log-loss gradient
S_i = ln(L_{i-1} / L_i) / (C_i - C_{i-1}), and the highest score wins.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError
from .graphnet import ModelParams, directed_edges, kinetic_terms, potential_terms
from .state import SystemSpec

_LOSS_FLOOR = 1e-300


class Expr:
    """Mutable expression tree node; op in {const, x, add, mul, pow}."""

    __slots__ = ("op", "val", "kids")

    def __init__(self, op, val=None, kids=()):
        self.op = op
        self.val = val
        self.kids = list(kids)

    def clone(self):
        return Expr(self.op, self.val, [k.clone() for k in self.kids])

    def nodes(self):
        yield self
        for k in self.kids:
            yield from k.nodes()

    def complexity(self):
        return sum(1 for _ in self.nodes())

    def __str__(self):
        if self.op == "const":
            return f"{self.val:.6g}"
        if self.op == "x":
            return "x0"
        if self.op == "add":
            return f"({self.kids[0]} + {self.kids[1]})"
        if self.op == "mul":
            return f"({self.kids[0]} * {self.kids[1]})"
        return f"({self.kids[0]})^{self.val}"


def const(v):
    return Expr("const", float(v))


def var_x():
    return Expr("x")


def add(a, b):
    return Expr("add", kids=(a, b))


def mul(a, b):
    return Expr("mul", kids=(a, b))


def powi(a, k):
    return Expr("pow", int(k), (a,))


def evaluate_expr(tree, x):
    """Evaluate over a scalar or array input; integer powers only."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = _eval(tree, x)
    return out if out.shape else float(out)


def _eval(tree, x):
    if tree.op == "const":
        return np.full_like(x, tree.val)
    if tree.op == "x":
        return x.copy() if x.shape else x + 0.0
    if tree.op == "add":
        return _eval(tree.kids[0], x) + _eval(tree.kids[1], x)
    if tree.op == "mul":
        return _eval(tree.kids[0], x) * _eval(tree.kids[1], x)
    base = _eval(tree.kids[0], x)
    if tree.val < 0 and np.any(base == 0.0):
        raise DomainError("zero raised to a negative power")
    return np.power(base, tree.val)


# ---------------------------------------------------------------------------
# sample sets

@dataclass
class SampleSet:
    """(input, target) pairs drawn from one energy head, gauge-normalized by
    subtracting the head's value at the reference input (the domain's lower
    bound)."""

    head: str
    inputs: np.ndarray
    targets: np.ndarray
    domain: tuple
    reference: float


def _grid(lo, hi, count, dense_low=False):
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    u = np.linspace(0.0, 1.0, count)
    if dense_low:
        u = u ** 1.6
    return lo + (hi - lo) * u


def _probe_spec(dim, types):
    n = len(types)
    return SystemSpec(kind="spring", n=n, dim=dim, masses=np.ones(n),
                      types=np.asarray(types, dtype=int), edges=[(0, 1)] if n == 2 else [],
                      constants={"k": 1.0, "r0": 1.0})


def pair_potential_curve(params, r_values, type_a=0, type_b=0):
    """Learned pair potential: v_ij + v_ji on a two-node probe graph."""
    dim = params.hyper["dim"]
    spec = _probe_spec(dim, [type_a, type_b])
    edges = directed_edges([(0, 1)])
    out = np.empty(len(r_values))
    for q, r in enumerate(r_values):
        xs = [0.0] * dim + [float(r)] + [0.0] * (dim - 1)
        _, ve = potential_terms(params, spec, xs, edges)
        out[q] = sum(ve)
    return out


def kinetic_curve(params, speeds, type_a=0):
    """Learned per-particle kinetic energy along v = (s, 0, ...)."""
    dim = params.hyper["dim"]
    spec = _probe_spec(dim, [type_a])
    out = np.empty(len(speeds))
    for q, s in enumerate(speeds):
        vs = [float(s)] + [0.0] * (dim - 1)
        out[q] = kinetic_terms(params, spec, vs)[0]
    return out


def node_potential_curve(params, coords, type_a=0, axis=1):
    """Learned per-particle potential along one position axis."""
    dim = params.hyper["dim"]
    spec = _probe_spec(dim, [type_a])
    out = np.empty(len(coords))
    for q, c in enumerate(coords):
        xs = [0.0] * dim
        xs[axis] = float(c)
        vn, _ = potential_terms(params, spec, xs, ())
        out[q] = vn[0]
    return out


def _observed_domain(model, head):
    ranges = model.meta.get("ranges")
    if not ranges:
        raise DomainError("checkpoint carries no observed training ranges")
    if head == "kinetic":
        return tuple(ranges["speed"])
    if head == "node":
        return tuple(ranges["coord"][1])
    if head.startswith("edge:"):
        pair = head.split(":", 1)[1]
        if pair not in ranges["distance"]:
            raise DomainError(f"species pair {pair} not observed in training")
        return tuple(ranges["distance"][pair])
    raise DomainError(f"unknown head {head!r}")


def sample_head(model, head, domain=None, count=200, dense_low=None):
    """Sample one trained head over a 1-D grid.

    head: "kinetic", "node", or "edge:a-b". The domain must lie strictly
    inside the training data's observed range; by default it is that range
    shrunk by 2.5% on each side.
    """
    if not isinstance(model, ModelParams):
        raise DomainError("sample_head expects trained model parameters")
    lo_obs, hi_obs = _observed_domain(model, head)
    if domain is None:
        pad = 0.025 * (hi_obs - lo_obs)
        domain = (lo_obs + pad, hi_obs - pad)
    lo, hi = float(domain[0]), float(domain[1])
    if not (lo_obs <= lo < hi <= hi_obs):
        raise DomainError(
            f"requested domain [{lo}, {hi}] is outside the observed "
            f"range [{lo_obs}, {hi_obs}] for head {head!r}")
    if dense_low is None:
        dense_low = model.meta.get("kind") == "binary_lj" and head.startswith("edge")
    grid = _grid(lo, hi, count, dense_low=dense_low)
    if head == "kinetic":
        raw = kinetic_curve(model, grid)
        ref = kinetic_curve(model, np.array([lo]))[0]
    elif head == "node":
        raw = node_potential_curve(model, grid)
        ref = node_potential_curve(model, np.array([lo]))[0]
    else:
        a, b = (int(t) for t in head.split(":", 1)[1].split("-"))
        raw = pair_potential_curve(model, grid, a, b)
        ref = pair_potential_curve(model, np.array([lo]), a, b)[0]
    return SampleSet(head=head, inputs=grid, targets=raw - ref,
                     domain=(lo, hi), reference=lo)


def standin_sampleset(head, domain=None, count=500):
    """Noise-free samples from the closed-form target functions, in the same
    per-head conventions the published coefficient tables use (full pair
    energy for the harmonic spring, per-directed-edge share for the binary
    mixture)."""
    from .systems import LJ_EPS, LJ_SIGMA, LJ_CUTOFF
    if head == "kinetic":
        lo, hi = domain or (0.0, 2.0)
        grid = _grid(lo, hi, count)
        return SampleSet(head=head, inputs=grid, targets=0.5 * grid ** 2,
                         domain=(lo, hi), reference=lo)
    if head == "spring-edge":
        lo, hi = domain or (0.6, 1.6)
        grid = _grid(lo, hi, count)
        return SampleSet(head=head, inputs=grid,
                         targets=0.5 * (grid - 1.0) ** 2,
                         domain=(lo, hi), reference=lo)
    if head.startswith("lj-edge:"):
        a, b = (int(t) for t in head.split(":", 1)[1].split("-"))
        key = (min(a, b), max(a, b))
        eps, sig = LJ_EPS[key], LJ_SIGMA[key]
        lo, hi = domain or (0.85 * sig, LJ_CUTOFF[key])
        grid = _grid(lo, hi, count, dense_low=True)
        targets = 2.0 * eps * (sig ** 12 / grid ** 12 - sig ** 6 / grid ** 6)
        return SampleSet(head=head, inputs=grid, targets=targets,
                         domain=(lo, hi), reference=lo)
    raise DomainError(f"unknown stand-in head {head!r}")


# ---------------------------------------------------------------------------
# GP machinery

@dataclass
class GPConfig:
    population: int = 512
    generations: int = 200
    tournament: int = 5
    p_crossover: float = 0.7
    p_mutation: float = 0.25
    max_depth: int = 7
    max_complexity: int = 24
    cd_passes: int = 2
    stop_loss: float = 1e-12
    stop_patience: int = 10
    seed: int = 0


@dataclass
class FrontEntry:
    complexity: int
    loss: float
    expr: Expr
    equation: str
    score: float = 0.0


class ParetoFront:
    """Best expression per complexity; finalized entries are strictly
    decreasing in loss as complexity grows."""

    def __init__(self):
        self.by_c = {}

    def offer(self, expr, loss):
        c = expr.complexity()
        cur = self.by_c.get(c)
        if cur is None or loss < cur[0]:
            self.by_c[c] = (loss, expr.clone())

    def entries(self):
        out = []
        best = math.inf
        for c in sorted(self.by_c):
            loss, expr = self.by_c[c]
            if loss < best:
                best = loss
                out.append(FrontEntry(complexity=c, loss=loss, expr=expr,
                                      equation=str(expr)))
        return out


def _exponent_menu(powers):
    menu = []
    for k in powers:
        k = int(k)
        if k in (0,):
            continue
        menu.extend([k, -k])
    if powers:
        menu.append(-1)
    return sorted(set(menu))


def _random_tree(rng, depth, menu, grow=True):
    if depth <= 0 or (grow and rng.random() < 0.3):
        if rng.random() < 0.5:
            return const(rng.uniform(-3.0, 3.0))
        return var_x()
    ops = ["add", "mul"] + (["pow"] if menu else [])
    op = ops[rng.integers(len(ops))]
    if op == "pow":
        return powi(_random_tree(rng, depth - 1, menu),
                    menu[rng.integers(len(menu))])
    return Expr(op, kids=(_random_tree(rng, depth - 1, menu),
                          _random_tree(rng, depth - 1, menu)))


def _pick_node(rng, tree):
    nodes = list(tree.nodes())
    return nodes[rng.integers(len(nodes))]


def _crossover(rng, a, b):
    child = a.clone()
    target = _pick_node(rng, child)
    donor = _pick_node(rng, b).clone()
    target.op, target.val, target.kids = donor.op, donor.val, donor.kids
    return child


def _mutate(rng, tree, menu):
    child = tree.clone()
    node = _pick_node(rng, child)
    r = rng.random()
    if r < 0.35 and node.op == "const":
        node.val += rng.normal() * (abs(node.val) + 0.5)
    elif r < 0.5 and node.op == "pow" and menu:
        node.val = menu[rng.integers(len(menu))]
    elif r < 0.65 and node.op in ("add", "mul"):
        node.op = "mul" if node.op == "add" else "add"
    else:
        repl = _random_tree(rng, 2, menu)
        node.op, node.val, node.kids = repl.op, repl.val, repl.kids
    return child


def _terms(tree):
    if tree.op == "add":
        return _terms(tree.kids[0]) + _terms(tree.kids[1])
    return [tree]


def _factors(tree):
    if tree.op == "mul":
        return _factors(tree.kids[0]) + _factors(tree.kids[1])
    return [tree]


def _mse(pred, y):
    if pred.shape != y.shape or not np.all(np.isfinite(pred)):
        return math.inf
    with np.errstate(over="ignore", invalid="ignore"):
        out = float(np.mean((pred - y) ** 2))
    return out if math.isfinite(out) else math.inf


def _loss(tree, x, y):
    try:
        pred = np.asarray(evaluate_expr(tree, x))
    except DomainError:
        return math.inf
    return _mse(pred, y)


def _linear_solve(tree, x, y):
    """Exact least squares on the top-level linear coefficients.

    Each additive term with at least one constant factor contributes one
    unknown scale (applied to its first constant); terms without constants
    are held fixed."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _linear_solve_inner(tree, x, y)


def _linear_solve_inner(tree, x, y):
    terms = _terms(tree)
    unknown_nodes, basis = [], []
    fixed = np.zeros_like(x)
    bias_nodes = []
    for t in terms:
        fac = _factors(t)
        consts = [f for f in fac if f.op == "const"]
        others = [f for f in fac if f.op != "const"]
        if not consts:
            try:
                fixed = fixed + _eval(t, x)
            except DomainError:
                return math.inf
            continue
        rest = math.prod(c.val for c in consts[1:])
        if not others:
            bias_nodes.append((consts[0], rest))
            continue
        try:
            g = np.ones_like(x)
            for o in others:
                g = g * _eval(o, x)
        except DomainError:
            return math.inf
        if not np.all(np.isfinite(g)):
            return math.inf
        unknown_nodes.append((consts[0], rest))
        basis.append(g)
    if not unknown_nodes and not bias_nodes:
        return _mse(fixed, y)
    cols = list(basis)
    if bias_nodes:
        cols.append(np.ones_like(x))
    A = np.column_stack(cols)
    rhs = y - fixed
    try:
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return math.inf
    if not np.all(np.isfinite(sol)):
        return math.inf
    for (node, rest), c in zip(unknown_nodes, sol[: len(unknown_nodes)]):
        node.val = float(c / rest) if rest != 0.0 else float(c)
    if bias_nodes:
        b = sol[-1]
        node, rest = bias_nodes[0]
        node.val = float(b / rest) if rest != 0.0 else float(b)
        for node, rest in bias_nodes[1:]:
            node.val = 0.0
    return _loss(tree, x, y)


def optimize_constants(tree, x, y, cd_passes=2):
    """Hybrid constant fit: linear least squares plus short coordinate
    descent (parabolic steps) on the remaining constants. Returns the loss."""
    loss = _linear_solve(tree, x, y)
    if not math.isfinite(loss):
        return _loss(tree, x, y)
    linear_ids = set()
    for t in _terms(tree):
        for f in _factors(t):
            if f.op == "const":
                linear_ids.add(id(f))
                break
    nonlinear = [n for n in tree.nodes()
                 if n.op == "const" and id(n) not in linear_ids]
    if not nonlinear:
        return loss
    for _ in range(cd_passes):
        for node in nonlinear:
            c0 = node.val
            h = 0.25 * (abs(c0) + 0.2)
            for _ in range(3):
                losses = []
                for c in (c0 - h, c0, c0 + h):
                    node.val = c
                    losses.append(_loss(tree, x, y))
                lm, l0, lp = losses
                denom = lm - 2 * l0 + lp
                if math.isfinite(denom) and denom > 0:
                    step = 0.5 * h * (lm - lp) / denom
                    step = max(-2 * h, min(2 * h, step))
                    cand = c0 + step
                else:
                    cand = c0 - h if lm < lp else c0 + h
                node.val = cand
                lc = _loss(tree, x, y)
                best = min((l0, c0), (lm, c0 - h), (lp, c0 + h), (lc, cand))
                node.val = best[1]
                c0 = best[1]
                h *= 0.5
        new_loss = _linear_solve(tree, x, y)
        if math.isfinite(new_loss):
            loss = new_loss
    return _loss(tree, x, y)


def fit(samples, powers, config=None):
    """Generational GP over the sample set; returns the Pareto front."""
    cfg = config or GPConfig()
    x = np.asarray(samples.inputs, dtype=float)
    y = np.asarray(samples.targets, dtype=float)
    if len(x) < 10:
        raise DomainError("need at least 10 samples to fit")
    menu = _exponent_menu(powers)
    rng = np.random.default_rng(cfg.seed)
    front = ParetoFront()

    def evaluate(tree):
        if tree.complexity() > cfg.max_complexity:
            return math.inf
        loss = optimize_constants(tree, x, y, cfg.cd_passes)
        if math.isfinite(loss):
            front.offer(tree, loss)
        return loss

    pop = []
    for q in range(cfg.population):
        t = _random_tree(rng, 2 + q % (cfg.max_depth - 2), menu,
                         grow=bool(q % 2))
        pop.append((t, evaluate(t)))

    def tourn():
        best = None
        for _ in range(cfg.tournament):
            cand = pop[rng.integers(len(pop))]
            if best is None or cand[1] < best[1]:
                best = cand
        return best[0]

    patience = 0
    for gen in range(cfg.generations):
        ranked = sorted(range(len(pop)), key=lambda q: pop[q][1])
        new = [pop[ranked[0]], pop[ranked[1]]]  # elitism
        while len(new) < cfg.population:
            r = rng.random()
            if r < cfg.p_crossover:
                child = _crossover(rng, tourn(), tourn())
            elif r < cfg.p_crossover + cfg.p_mutation:
                child = _mutate(rng, tourn(), menu)
            else:
                child = tourn().clone()
            if child.complexity() > cfg.max_complexity:
                child = _random_tree(rng, 3, menu)
            new.append((child, evaluate(child)))
        pop = new
        best_loss = min(q[1] for q in pop)
        if best_loss <= cfg.stop_loss:
            patience += 1
            if patience >= cfg.stop_patience:
                break
        else:
            patience = 0
    return front


def score_front(front):
    """Scores along the front: S_i = ln(L_{i-1}/L_i) / (C_i - C_{i-1}),
    first entry 0; returned sorted by score descending."""
    entries = front.entries() if isinstance(front, ParetoFront) else list(front)
    for q, e in enumerate(entries):
        if q == 0:
            e.score = 0.0
        else:
            prev = entries[q - 1]
            num = math.log(max(prev.loss, _LOSS_FLOOR) /
                           max(e.loss, _LOSS_FLOOR))
            e.score = num / (e.complexity - prev.complexity)
    return sorted(entries, key=lambda e: (-e.score, e.complexity, e.loss))


def select_best(scored, top_k=10):
    """Highest score among the top_k; ties break to lower complexity, then
    lower loss (the sort in score_front already encodes that order)."""
    if not scored:
        raise DomainError("empty scored front")
    return scored[: max(1, top_k)][0]


def distill(model, head, powers, count=500, config=None, domain=None):
    """sample -> fit -> score -> select; returns a full report dict."""
    samples = (standin_sampleset(head, domain=domain, count=count)
               if head.startswith(("lj-edge:", "spring-edge")) or
               not isinstance(model, ModelParams)
               else sample_head(model, head, domain=domain, count=count))
    cfg = config or GPConfig()
    front = fit(samples, powers, cfg)
    scored = score_front(front)
    best = select_best(scored)
    ordered = sorted(scored, key=lambda e: e.complexity)
    return {
        "head": samples.head,
        "domain": list(samples.domain),
        "reference": samples.reference,
        "powers": list(powers),
        "count": len(samples.inputs),
        "gp": {"population": cfg.population, "generations": cfg.generations,
               "tournament": cfg.tournament, "crossover": cfg.p_crossover,
               "mutation": cfg.p_mutation, "seed": cfg.seed},
        "front": [{"complexity": e.complexity, "loss": e.loss,
                   "score": e.score, "equation": e.equation}
                  for e in ordered],
        "selected": {"complexity": best.complexity, "loss": best.loss,
                     "score": best.score, "equation": best.equation},
    }
