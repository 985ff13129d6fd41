"""Analytic benchmark systems: Hamiltonians, constraints, initial-condition
samplers, and ground-truth trajectory generation.

Four base systems plus hybrids composed of them:

* chain of bobs on rigid rods in a uniform field (2-D, constrained),
* loop of masses joined by harmonic springs (2-D),
* point masses under a pairwise repulsive 1/r potential (2-D),
* 80:20 binary Lennard-Jones mixture in a periodic box (3-D, reduced units).

Every energy exists twice: a vectorized numpy form used for production
integration, and a generic scalar form (``generic_energy``) written against
:mod:`hdlearn.autodiff.ops` so the same expression can be traced and
differentiated; tests cross-check the two.
"""

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .dynamics import HamiltonianField, rollout, velocity_verlet_step
from .errors import DivergenceError, DomainError, PlacementError
from .state import PhaseState, SystemKind, SystemSpec, SubSystem, minimum_image

# Kob-Andersen binary mixture parameters, keyed by sorted species pair.
LJ_EPS = {(0, 0): 1.0, (0, 1): 1.5, (1, 1): 0.5}
LJ_SIGMA = {(0, 0): 1.00, (0, 1): 0.80, (1, 1): 0.88}
LJ_CUTOFF = {(0, 0): 2.5, (0, 1): 2.0, (1, 1): 2.2}
LJ_BOX = 3.968
LJ_TEMPERATURE = 1.2

DEFAULT_DT = {
    SystemKind.PENDULUM: 1e-5,
    SystemKind.SPRING: 1e-3,
    SystemKind.GRAVITATIONAL: 1e-3,
    SystemKind.BINARY_LJ: 1e-4,
    SystemKind.HYBRID: 1e-5,
}

# Recording interval (in integrator steps) used when sampling training data.
DEFAULT_STRIDE = {
    SystemKind.PENDULUM: 1000,
    SystemKind.SPRING: 100,
    SystemKind.GRAVITATIONAL: 100,
    SystemKind.BINARY_LJ: 1000,
    SystemKind.HYBRID: 100,
}


# ---------------------------------------------------------------------------
# spec factories

def pendulum_spec(n):
    """Chain of n unit-mass bobs on unit rods, anchored at the origin."""
    return SystemSpec(kind=SystemKind.PENDULUM, n=n, dim=2,
                      masses=np.ones(n), types=np.zeros(n, dtype=int),
                      edges=[(i - 1, i) for i in range(1, n)],
                      constants={"g": 10.0, "l": 1.0},
                      constraint_count=n)


def spring_spec(n):
    """Loop of n unit masses, each joined to its two neighbours by a spring.

    n = 2 degenerates to a single spring between the two masses.
    """
    edges = [(0, 1)] if n == 2 else [(i, (i + 1) % n) for i in range(n)]
    return SystemSpec(kind=SystemKind.SPRING, n=n, dim=2,
                      masses=np.ones(n), types=np.zeros(n, dtype=int),
                      edges=edges, constants={"k": 1.0, "r0": 1.0})


def gravitational_spec(n=4):
    """Fully connected point masses with the pairwise repulsive potential."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return SystemSpec(kind=SystemKind.GRAVITATIONAL, n=n, dim=2,
                      masses=np.ones(n), types=np.zeros(n, dtype=int),
                      edges=edges, constants={"G": 1.0})


def lj_spec(n=75, box=None):
    """Binary Kob-Andersen mixture: 80% species 0, 20% species 1.

    The default box keeps the 75-particle reference density at other sizes.
    """
    if box is None:
        box = LJ_BOX * (n / 75.0) ** (1.0 / 3.0)
    n0 = int(round(0.8 * n))
    types = np.array([0] * n0 + [1] * (n - n0), dtype=int)
    constants = {"box": float(box)}
    for (a, b), v in LJ_EPS.items():
        constants[f"eps_{a}{b}"] = v
    for (a, b), v in LJ_SIGMA.items():
        constants[f"sigma_{a}{b}"] = v
    for (a, b), v in LJ_CUTOFF.items():
        constants[f"cutoff_{a}{b}"] = v
    return SystemSpec(kind=SystemKind.BINARY_LJ, n=n, dim=3,
                      masses=np.ones(n), types=types, edges=[],
                      constants=constants, pbc=True)


def hybrid_spec(n_chain=3, n_loop=4):
    """Rod chain anchored at the origin whose last bob also belongs to a
    spring loop; the uniform field acts on the chain particles only, so the
    total energy is exactly the superposition of the two sub-systems."""
    n = n_chain + n_loop - 1  # the junction particle is shared
    chain = tuple(range(n_chain))
    loop = tuple([n_chain - 1] + list(range(n_chain, n)))
    chain_edges = tuple((i - 1, i) for i in range(1, n_chain))
    loop_edges = tuple((loop[i], loop[(i + 1) % n_loop]) for i in range(n_loop))
    subs = (
        SubSystem(kind=SystemKind.PENDULUM, particles=chain,
                  edges=chain_edges, kinetic_owned=chain),
        SubSystem(kind=SystemKind.SPRING, particles=loop,
                  edges=loop_edges, kinetic_owned=tuple(range(n_chain, n))),
    )
    return SystemSpec(kind=SystemKind.HYBRID, n=n, dim=2,
                      masses=np.ones(n), types=np.zeros(n, dtype=int),
                      edges=chain_edges + loop_edges,
                      constants={"g": 10.0, "l": 1.0, "k": 1.0, "r0": 1.0},
                      constraint_count=n_chain, subsystems=subs)


# ---------------------------------------------------------------------------
# generic (trace-capable) energies; xs/vs are flat scalar sequences

def _kinetic_generic(masses, vs, dim, owned=None):
    n = len(masses)
    idx = range(n) if owned is None else owned
    return ops.ssum([0.5 * masses[i] * ops.dot(vs[i * dim:(i + 1) * dim],
                                               vs[i * dim:(i + 1) * dim])
                     for i in idx])


def _pendulum_potential_generic(g, masses, xs, dim, particles):
    return ops.ssum([-masses[i] * g * xs[i * dim + 1] for i in particles])


def _spring_potential_generic(k, r0, xs, dim, edges):
    terms = []
    for i, j in edges:
        d = [xs[i * dim + q] - xs[j * dim + q] for q in range(dim)]
        r = ops.norm(d)
        terms.append(0.5 * k * (r - r0) ** 2)
    return ops.ssum(terms)


def _grav_potential_generic(G, masses, xs, dim, n):
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            d = [xs[i * dim + q] - xs[j * dim + q] for q in range(dim)]
            r2 = ops.dot(d, d)
            if ops.value_of(r2) == 0.0:
                raise DomainError(f"coincident particles {i} and {j}")
            # ordered double sum in the defining equation: each pair twice
            terms.append(2.0 * G * masses[i] * masses[j] / ops.sqrt(r2))
    return ops.ssum(terms)


def _lj_potential_generic(spec, xs):
    box = spec.constants["box"]
    types = spec.types
    n, dim = spec.n, spec.dim
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            a, b = sorted((int(types[i]), int(types[j])))
            sig = spec.constants[f"sigma_{a}{b}"]
            eps = spec.constants[f"eps_{a}{b}"]
            cut = spec.constants[f"cutoff_{a}{b}"]
            d = [ops.minimum_image(xs[i * dim + q] - xs[j * dim + q], box)
                 for q in range(dim)]
            r2 = ops.dot(d, d)
            if ops.value_of(r2) >= cut * cut:
                continue
            a3 = (sig * sig / r2) ** 3
            terms.append(4.0 * eps * (a3 * a3 - a3))
    return ops.ssum(terms)


def generic_energy(spec):
    """Trace-capable total energy: a function of flat (xs, vs) sequences."""
    kind = spec.kind
    masses = [float(m) for m in spec.masses]
    dim = spec.dim

    def h(xs, vs):
        t = _kinetic_generic(masses, vs, dim)
        if kind is SystemKind.PENDULUM:
            v = _pendulum_potential_generic(spec.constants["g"], masses, xs,
                                            dim, range(spec.n))
        elif kind is SystemKind.SPRING:
            v = _spring_potential_generic(spec.constants["k"],
                                          spec.constants["r0"], xs, dim,
                                          spec.edges)
        elif kind is SystemKind.GRAVITATIONAL:
            v = _grav_potential_generic(spec.constants["G"], masses, xs, dim,
                                        spec.n)
        elif kind is SystemKind.BINARY_LJ:
            v = _lj_potential_generic(spec, xs)
        elif kind is SystemKind.HYBRID:
            parts = []
            for sub in spec.subsystems:
                if sub.kind is SystemKind.PENDULUM:
                    parts.append(_pendulum_potential_generic(
                        spec.constants["g"], masses, xs, dim, sub.particles))
                else:
                    parts.append(_spring_potential_generic(
                        spec.constants["k"], spec.constants["r0"], xs, dim,
                        sub.edges))
            v = ops.ssum(parts)
        else:
            raise DomainError(f"no analytic energy for kind {kind}")
        return t + v

    return h


def generic_energy_of_z(spec):
    """Same energy as a function of the flat state Z = [x; p]."""
    h = generic_energy(spec)
    masses = [float(m) for m in spec.masses]
    nd = spec.n * spec.dim

    def h_of_z(z):
        xs = list(z[:nd])
        vs = [z[nd + i] / masses[i // spec.dim] for i in range(nd)]
        return h(xs, vs)

    return h_of_z


# ---------------------------------------------------------------------------
# vectorized energies and forces

def _kind_guard(spec, kind, name):
    if spec.kind is not kind:
        raise DomainError(f"{name} expects a {kind.value} spec, got {spec.kind.value}")


def kinetic_energy(spec, state):
    return 0.5 * float(np.sum(spec.masses[:, None] * state.v ** 2))


def pendulum_hamiltonian(spec, state):
    """Sum over bobs of (kinetic - m g x2), exactly as defined."""
    _kind_guard(spec, SystemKind.PENDULUM, "pendulum_hamiltonian")
    g = spec.constants["g"]
    return kinetic_energy(spec, state) - float(
        np.sum(spec.masses * g * state.x[:, 1]))


def spring_hamiltonian(spec, state):
    """Kinetic plus one harmonic well per loop edge (restoring sign)."""
    _kind_guard(spec, SystemKind.SPRING, "spring_hamiltonian")
    k, r0 = spec.constants["k"], spec.constants["r0"]
    pot = 0.0
    for i, j in spec.edges:
        r = float(np.linalg.norm(state.x[i] - state.x[j]))
        pot += 0.5 * k * (r - r0) ** 2
    return kinetic_energy(spec, state) + pot


def gravitational_hamiltonian(spec, state):
    """Kinetic plus the repulsive pair potential, ordered pairs counted twice."""
    _kind_guard(spec, SystemKind.GRAVITATIONAL, "gravitational_hamiltonian")
    G = spec.constants["G"]
    m = spec.masses
    pot = 0.0
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            r = float(np.linalg.norm(state.x[i] - state.x[j]))
            if r == 0.0:
                raise DomainError(f"coincident particles {i} and {j}")
            pot += 2.0 * G * m[i] * m[j] / r
    return kinetic_energy(spec, state) + pot


def lj_pair_energy(type_a, type_b, r):
    """Per-unordered-pair energy 4 eps [(sigma/r)^12 - (sigma/r)^6],
    truncated to zero at the species-pair cutoff."""
    if r <= 0:
        raise DomainError("pair distance must be positive")
    key = tuple(sorted((int(type_a), int(type_b))))
    if r >= LJ_CUTOFF[key]:
        return 0.0
    s6 = (LJ_SIGMA[key] / r) ** 6
    return 4.0 * LJ_EPS[key] * (s6 * s6 - s6)


class _LJTables:
    """Pairwise parameter arrays for one spec, built once."""

    def __init__(self, spec):
        n = spec.n
        self.box = spec.constants["box"]
        ii, jj = np.triu_indices(n, k=1)
        self.ii, self.jj = ii, jj
        ta = np.minimum(spec.types[ii], spec.types[jj])
        tb = np.maximum(spec.types[ii], spec.types[jj])
        eps = np.empty(len(ii))
        sig = np.empty(len(ii))
        cut = np.empty(len(ii))
        for (a, b) in ((0, 0), (0, 1), (1, 1)):
            m = (ta == a) & (tb == b)
            eps[m] = spec.constants[f"eps_{a}{b}"]
            sig[m] = spec.constants[f"sigma_{a}{b}"]
            cut[m] = spec.constants[f"cutoff_{a}{b}"]
        self.eps = eps
        self.sig2 = sig ** 2
        self.cut2 = cut ** 2
        s6c = (sig ** 2 / cut ** 2) ** 3
        self.shift = 4.0 * eps * (s6c * s6c - s6c)  # energy at the cutoff

    def pair_terms(self, x):
        d = minimum_image(x[self.ii] - x[self.jj], self.box)
        r2 = np.sum(d * d, axis=1)
        mask = r2 < self.cut2
        return d, r2, mask

    def potential(self, x, shifted=False):
        _, r2, mask = self.pair_terms(x)
        a3 = (self.sig2[mask] / r2[mask]) ** 3
        e = 4.0 * self.eps[mask] * (a3 * a3 - a3)
        if shifted:
            e = e - self.shift[mask]
        return float(np.sum(e))

    def forces(self, x):
        d, r2, mask = self.pair_terms(x)
        f = np.zeros_like(x)
        if not np.any(mask):
            return f
        dm = d[mask]
        r2m = r2[mask]
        a3 = (self.sig2[mask] / r2m) ** 3
        w = (24.0 * self.eps[mask] / r2m) * (2.0 * a3 * a3 - a3)
        fm = w[:, None] * dm
        np.add.at(f, self.ii[mask], fm)
        np.add.at(f, self.jj[mask], -fm)
        return f


def lj_hamiltonian(spec, state, tables=None):
    """Kinetic plus truncated pair energies under minimum image."""
    _kind_guard(spec, SystemKind.BINARY_LJ, "lj_hamiltonian")
    tables = tables or _LJTables(spec)
    return kinetic_energy(spec, state) + tables.potential(state.x)


def lj_shifted_hamiltonian(spec, state, tables=None):
    """Cutoff-continuous variant used for drift monitoring: each included
    pair's energy is shifted to vanish at its cutoff."""
    tables = tables or _LJTables(spec)
    return kinetic_energy(spec, state) + tables.potential(state.x, shifted=True)


def hybrid_hamiltonian(spec, state):
    _kind_guard(spec, SystemKind.HYBRID, "hybrid_hamiltonian")
    g, k, r0 = (spec.constants[c] for c in ("g", "k", "r0"))
    pot = 0.0
    for sub in spec.subsystems:
        if sub.kind is SystemKind.PENDULUM:
            idx = list(sub.particles)
            pot -= float(np.sum(spec.masses[idx] * g * state.x[idx, 1]))
        else:
            for i, j in sub.edges:
                r = float(np.linalg.norm(state.x[i] - state.x[j]))
                pot += 0.5 * k * (r - r0) ** 2
    return kinetic_energy(spec, state) + pot


# ---------------------------------------------------------------------------
# constraint sets

@dataclass(frozen=True)
class ConstraintSet:
    """Position-level constraints Phi(x) = 0 with the stacked Pfaffian form
    Psi = (Phi; Phidot) and its analytic Jacobian D_Z Psi."""

    k: int
    phi: object          # (n, D) positions -> (k,) residuals
    jacobian: object     # PhaseState -> (2k, 2nD)
    sparse_rows: object  # (xs, vs) scalar sequences -> (C, G) sparse rows


def chain_constraints(spec, chain=None, length=None):
    """Rigid-rod chain: particle chain[0] anchored to the origin, each link
    holding its predecessor at fixed distance.

    Phi_r = (|x_r - x_{r-1}|^2 - l^2) / 2, so rows of D_x Phi are plain
    coordinate differences.
    """
    chain = tuple(chain if chain is not None else range(spec.n))
    length = float(length if length is not None else spec.constants.get("l", 1.0))
    dim = spec.dim
    n = spec.n
    k = len(chain)
    masses = np.asarray(spec.masses)

    c_arr = np.asarray(chain)
    rows = np.repeat(np.arange(k), dim)
    cols_cur = (c_arr[:, None] * dim + np.arange(dim)).ravel()
    cols_prev = cols_cur[:-dim] if k > 1 else np.zeros(0, dtype=int)
    m_cur = np.repeat(masses[c_arr], dim)
    m_prev = m_cur[:-dim] if k > 1 else np.zeros(0)

    def _link_diffs(a):
        chained = a[c_arr]
        out = chained.copy()
        out[1:] -= chained[:-1]
        return out

    def phi(x):
        dx = _link_diffs(np.asarray(x))
        return 0.5 * (np.sum(dx * dx, axis=1) - length * length)

    def jacobian(state):
        dx = _link_diffs(state.x)
        dv = _link_diffs(state.v)
        C = np.zeros((k, n * dim))
        G = np.zeros((k, n * dim))
        D = np.zeros((k, n * dim))
        C[rows, cols_cur] = dx.ravel()
        G[rows, cols_cur] = dv.ravel()
        D[rows, cols_cur] = dx.ravel() / m_cur
        if k > 1:
            C[rows[dim:], cols_prev] = -dx[1:].ravel()
            G[rows[dim:], cols_prev] = -dv[1:].ravel()
            D[rows[dim:], cols_prev] = -dx[1:].ravel() / m_prev
        top = np.hstack([C, np.zeros_like(C)])
        bottom = np.hstack([G, D])
        return np.vstack([top, bottom])

    def sparse_rows(xs, vs):
        C, G = [], []
        for r, c in enumerate(chain):
            pc = chain[r - 1] if r > 0 else None
            crow, grow = {}, {}
            for q in range(dim):
                if pc is None:
                    dxq = xs[c * dim + q]
                    dvq = vs[c * dim + q]
                else:
                    dxq = xs[c * dim + q] - xs[pc * dim + q]
                    dvq = vs[c * dim + q] - vs[pc * dim + q]
                crow[c * dim + q] = dxq
                grow[c * dim + q] = dvq
                if pc is not None:
                    crow[pc * dim + q] = -dxq
                    grow[pc * dim + q] = -dvq
            C.append(crow)
            G.append(grow)
        return C, G

    return ConstraintSet(k=k, phi=phi, jacobian=jacobian, sparse_rows=sparse_rows)


def pendulum_constraints(spec):
    _kind_guard(spec, SystemKind.PENDULUM, "pendulum_constraints")
    return chain_constraints(spec)


def hybrid_constraints(spec):
    _kind_guard(spec, SystemKind.HYBRID, "hybrid_constraints")
    for sub in spec.subsystems:
        if sub.kind is SystemKind.PENDULUM:
            return chain_constraints(spec, chain=sub.particles)
    return None


# ---------------------------------------------------------------------------
# analytic fields (closed-form gradients)

def _grad_z_factory(spec, tables=None):
    kind = spec.kind
    m_col = np.asarray(spec.masses)[:, None]

    def grad_v_part(state):
        return state.p / m_col  # dH/dp = v for diagonal kinetic energy

    if kind is SystemKind.PENDULUM:
        g = spec.constants["g"]

        def grad_x(state):
            gx = np.zeros_like(state.x)
            gx[:, 1] = -spec.masses * g
            return gx
    elif kind is SystemKind.SPRING:
        k, r0 = spec.constants["k"], spec.constants["r0"]
        edges = spec.edges

        def grad_x(state):
            gx = np.zeros_like(state.x)
            for i, j in edges:
                d = state.x[i] - state.x[j]
                r = float(np.linalg.norm(d))
                w = k * (r - r0) / r
                gx[i] += w * d
                gx[j] -= w * d
            return gx
    elif kind is SystemKind.GRAVITATIONAL:
        G = spec.constants["G"]
        m = spec.masses

        def grad_x(state):
            gx = np.zeros_like(state.x)
            for i in range(spec.n):
                for j in range(i + 1, spec.n):
                    d = state.x[i] - state.x[j]
                    r = float(np.linalg.norm(d))
                    w = -2.0 * G * m[i] * m[j] / r ** 3
                    gx[i] += w * d
                    gx[j] -= w * d
            return gx
    elif kind is SystemKind.BINARY_LJ:
        tab = tables or _LJTables(spec)

        def grad_x(state):
            return -tab.forces(state.x)
    elif kind is SystemKind.HYBRID:
        g, k, r0 = (spec.constants[c] for c in ("g", "k", "r0"))
        pend_particles = []
        spring_edges = []
        for sub in spec.subsystems:
            if sub.kind is SystemKind.PENDULUM:
                pend_particles.extend(sub.particles)
            else:
                spring_edges.extend(sub.edges)

        def grad_x(state):
            gx = np.zeros_like(state.x)
            gx[pend_particles, 1] = -spec.masses[pend_particles] * g
            for i, j in spring_edges:
                d = state.x[i] - state.x[j]
                r = float(np.linalg.norm(d))
                w = k * (r - r0) / r
                gx[i] += w * d
                gx[j] -= w * d
            return gx
    else:
        raise DomainError(f"no analytic field for kind {kind}")

    def grad_z(state):
        return np.concatenate([grad_x(state).ravel(), grad_v_part(state).ravel()])

    return grad_z


@dataclass(frozen=True)
class AnalyticSystem:
    """A spec bundled with its exact energy, constraints, and force field."""

    spec: SystemSpec
    hamiltonian: object
    constraint: object
    field: HamiltonianField

    def energy(self, state):
        return self.hamiltonian(state)


def analytic_system(spec):
    kind = spec.kind
    tables = _LJTables(spec) if kind is SystemKind.BINARY_LJ else None
    if kind is SystemKind.PENDULUM:
        h = lambda s: pendulum_hamiltonian(spec, s)
        constraint = pendulum_constraints(spec)
    elif kind is SystemKind.SPRING:
        h = lambda s: spring_hamiltonian(spec, s)
        constraint = None
    elif kind is SystemKind.GRAVITATIONAL:
        h = lambda s: gravitational_hamiltonian(spec, s)
        constraint = None
    elif kind is SystemKind.BINARY_LJ:
        h = lambda s: lj_hamiltonian(spec, s, tables)
        constraint = None
    elif kind is SystemKind.HYBRID:
        h = lambda s: hybrid_hamiltonian(spec, s)
        constraint = hybrid_constraints(spec)
    else:
        raise DomainError(f"unknown system kind {kind}")
    field = HamiltonianField(value=h, grad_z=_grad_z_factory(spec, tables),
                             masses=np.asarray(spec.masses), separable=True)
    return AnalyticSystem(spec=spec, hamiltonian=h, constraint=constraint,
                          field=field)


# ---------------------------------------------------------------------------
# initial conditions

def temperature(spec, state):
    """Instantaneous kinetic temperature 2 T_kin / (D n), k_B = 1."""
    return 2.0 * kinetic_energy(spec, state) / (spec.dim * spec.n)


def _sample_chain(rng, spec, chain, base=None):
    """Angles drawn uniformly; positions built link by link so the rod
    residuals vanish exactly."""
    length = spec.constants.get("l", 1.0)
    x = np.zeros((spec.n, spec.dim)) if base is None else base
    prev = np.zeros(spec.dim)
    for c in chain:
        theta = rng.uniform(0.0, 2.0 * math.pi)
        x[c] = prev + length * np.array([math.sin(theta), math.cos(theta)])
        prev = x[c]
    return x


def sample_initial(spec, seed):
    """Deterministic random initial state respecting the spec's constraints."""
    rng = np.random.default_rng(seed)
    kind = spec.kind
    if kind is SystemKind.PENDULUM:
        x = _sample_chain(rng, spec, range(spec.n))
        v = np.zeros_like(x)
        return PhaseState.from_xv(spec, x, v)
    if kind is SystemKind.SPRING:
        r0 = spec.constants["r0"]
        radius = r0 / (2.0 * math.sin(math.pi / spec.n))
        ang = 2.0 * math.pi * np.arange(spec.n) / spec.n
        x = radius * np.column_stack([np.cos(ang), np.sin(ang)])
        x += rng.normal(scale=0.15, size=x.shape)
        v = rng.normal(scale=0.25, size=x.shape)
        return PhaseState.from_xv(spec, x, v)
    if kind is SystemKind.GRAVITATIONAL:
        if spec.n % 2:
            raise DomainError("gravitational sampler expects an even particle count")
        x = np.zeros((spec.n, 2))
        v = np.zeros((spec.n, 2))
        speed = math.sqrt(spec.constants["G"] / 4.0)  # circular-orbit magnitude
        centers = [np.array([-2.0, 0.0]), np.array([2.0, 0.0])]
        for p in range(spec.n // 2):
            c = centers[p % 2]
            sense = 1.0 if p % 2 == 0 else -1.0
            for s, sign in enumerate((1.0, -1.0)):
                i = 2 * p + s
                x[i] = c + sign * np.array([0.0, 1.0])
                v[i] = sense * sign * np.array([speed, 0.0])
        x += rng.normal(scale=0.05, size=x.shape)
        v += rng.normal(scale=0.02, size=v.shape)
        return PhaseState.from_xv(spec, x, v)
    if kind is SystemKind.BINARY_LJ:
        box = spec.constants["box"]
        min_dist = 0.85 * min(LJ_SIGMA.values())
        x = np.empty((spec.n, 3))
        attempts = 0
        placed = 0
        while placed < spec.n:
            attempts += 1
            if attempts > 1_000_000:
                raise PlacementError(
                    f"could not place particle {placed} after 1e6 attempts")
            cand = rng.uniform(0.0, box, size=3)
            if placed:
                d = minimum_image(x[:placed] - cand, box)
                if np.min(np.sum(d * d, axis=1)) < min_dist ** 2:
                    continue
            x[placed] = cand
            placed += 1
        v = rng.normal(size=(spec.n, 3))
        state = PhaseState.from_xv(spec, x, v)
        scale = math.sqrt(LJ_TEMPERATURE / temperature(spec, state))
        return PhaseState.from_xv(spec, x, v * scale)
    if kind is SystemKind.HYBRID:
        x = np.zeros((spec.n, spec.dim))
        v = np.zeros_like(x)
        chain = loop = None
        for sub in spec.subsystems:
            if sub.kind is SystemKind.PENDULUM:
                chain = sub.particles
            else:
                loop = sub
        x = _sample_chain(rng, spec, chain, base=x)
        r0 = spec.constants["r0"]
        junction = loop.particles[0]
        corners = [np.array([0.0, 0.0]), np.array([r0, 0.0]),
                   np.array([r0, -r0]), np.array([0.0, -r0])]
        for q, part in enumerate(loop.particles):
            if part == junction:
                continue
            x[part] = x[junction] + corners[q] + rng.normal(scale=0.05, size=2)
            v[part] = rng.normal(scale=0.25, size=2)
        return PhaseState.from_xv(spec, x, v)
    raise DomainError(f"no sampler for kind {kind}")


# ---------------------------------------------------------------------------
# equilibration and generation

def equilibrate_lj(spec, state, steps, dt=1e-4):
    """NVE run with velocity rescaling to the target temperature every 100
    steps during the first half, pure NVE in the second half."""
    _kind_guard(spec, SystemKind.BINARY_LJ, "equilibrate_lj")
    if steps == 0:
        return state
    system = analytic_system(spec)
    half = steps // 2
    for k in range(1, steps + 1):
        state = velocity_verlet_step(system.field, None, state, dt).state
        if k <= half and k % 100 == 0:
            h = system.hamiltonian(state)
            if abs(h) > 1e6:
                raise DivergenceError(
                    f"energy {h:.3g} diverged during equilibration; "
                    "bad initial placement")
            scale = math.sqrt(LJ_TEMPERATURE / temperature(spec, state))
            state = PhaseState.from_xv(spec, state.x, state.v * scale,
                                       time=state.time)
    return state


def generate_trajectory(system, init, dt=None, steps=1000, stride=1):
    """Roll the constrained ground-truth dynamics and record every `stride`
    steps, keeping each recorded frame's one-step successor for training."""
    spec = system.spec
    dt = DEFAULT_DT[spec.kind] if dt is None else dt
    return rollout(system.field, system.constraint, init, dt, steps, stride,
                   spec=spec, store_successors=True)
