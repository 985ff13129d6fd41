"""Dataset assembly from ground-truth trajectories and Adam training of the
single-step prediction loss.

The per-sample loss is |Z_pred - Z_true|^2 where Z_pred comes from one
velocity-Verlet step of the learned field. Training traces this computation
once onto a tape (forward-mode tangents for the inner state gradients become
ordinary tape nodes), then replays it per sample in the compiled kernel: one
reverse sweep per sample yields the full second-order parameter gradient.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from . import graphnet as gn
from .autodiff import ops
from .dynamics import velocity_verlet_step
from .errors import DivergenceError, DomainError
from .state import PhaseState, SystemKind

TRAIN_FRACTION = 0.75


@dataclass
class Dataset:
    """Single-step training pairs with a 75:25 train/validation split."""

    spec: object
    pairs: list              # (PhaseState, PhaseState) one fine dt apart
    dt: float
    train_idx: np.ndarray
    val_idx: np.ndarray
    ranges: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)

    def rows(self, idx):
        out = np.empty((len(idx), 4 * self.spec.n * self.spec.dim))
        for r, i in enumerate(idx):
            a, b = self.pairs[i]
            out[r] = np.concatenate([a.flat_z(), b.flat_z()])
        return out


def _observed_ranges(spec, states):
    speeds, coords = [], []
    dists = {}
    for st in states:
        speeds.extend(np.linalg.norm(st.v, axis=1))
        coords.append(st.x)
        for i, j in spec.edges:
            key = tuple(sorted((int(spec.types[i]), int(spec.types[j]))))
            d = st.x[i] - st.x[j]
            if spec.pbc:
                from .state import minimum_image
                d = minimum_image(d, spec.constants["box"])
            dists.setdefault(key, []).append(float(np.linalg.norm(d)))
    coords = np.concatenate(coords)
    ranges = {
        "speed": [0.0, float(np.max(speeds))],
        "coord": [[float(coords[:, q].min()), float(coords[:, q].max())]
                  for q in range(spec.dim)],
        "distance": {f"{a}-{b}": [float(min(v)), float(max(v))]
                     for (a, b), v in dists.items()},
    }
    return ranges


def build_dataset(trajectories, pairs_per_traj, seed):
    """Sample recorded frames (already decorrelated by the recording stride)
    and pair each with its stored one-fine-step successor."""
    if pairs_per_traj <= 0:
        raise DomainError("pairs_per_traj must be positive")
    if not trajectories:
        raise DomainError("no trajectories given")
    spec = trajectories[0].spec
    for t in trajectories:
        if t.spec.kind != spec.kind:
            raise DomainError("trajectories must share one system kind")
    rng = np.random.default_rng(seed)
    pairs = []
    for t in trajectories:
        if t.successors is None:
            raise DomainError("trajectory carries no successor states")
        avail = min(len(t.frames), len(t.successors))
        if avail < pairs_per_traj:
            raise DomainError(
                f"trajectory has {avail} usable frames, need {pairs_per_traj}")
        chosen = rng.choice(avail, size=pairs_per_traj, replace=False)
        for c in sorted(chosen):
            pairs.append((t.frames[c], t.successors[c]))
    order = rng.permutation(len(pairs))
    n_train = int(round(TRAIN_FRACTION * len(pairs)))
    ranges = _observed_ranges(spec, [p[0] for p in pairs])
    return Dataset(spec=spec, pairs=pairs, dt=trajectories[0].dt,
                   train_idx=order[:n_train], val_idx=order[n_train:],
                   ranges=ranges)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    stop_delta: float = 0.001   # relative train-loss decrease over the window
    stop_window: int = 100
    max_epochs: int = 2000
    seed: int = 0


class Adam:
    """Standard Adam with bias correction over one flat parameter vector."""

    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# traced one-step loss

class _ParamsView:
    """ModelParams look-alike whose weights are nested lists of tape Vars."""

    def __init__(self, params, theta_vars):
        self.hyper = params.hyper
        self.weights = {}
        pos = 0
        for name, w in params.weights.items():
            n = w.size
            chunk = theta_vars[pos: pos + n]
            pos += n
            if w.ndim == 1:
                self.weights[name] = list(chunk)
            else:
                rows, cols = w.shape
                self.weights[name] = [chunk[r * cols:(r + 1) * cols]
                                      for r in range(rows)]


def _grad_x_potential(pview, spec, xs, edges, nodes=None):
    def v_total(x_duals):
        vn, ve = gn.potential_terms(pview, spec, x_duals, edges, nodes)
        return ops.ssum(vn + ve)
    return ad.grad_state(v_total, xs)


def _grad_p_kinetic(pview, spec, ps, masses, owned=None):
    def t_total(p_duals):
        v_duals = [p / masses[q // spec.dim] for q, p in enumerate(p_duals)]
        return ops.ssum(gn.kinetic_terms(pview, spec, v_duals, owned))
    return ad.grad_state(t_total, ps)


def _grad_full(pview, spec, xs, ps, masses, edges):
    def h_total(z_duals):
        nd = len(xs)
        x_d = z_duals[:nd]
        v_d = [p / masses[q // spec.dim] for q, p in enumerate(z_duals[nd:])]
        vn, ve = gn.potential_terms(pview, spec, x_d, edges)
        taus = gn.kinetic_terms(pview, spec, v_d)
        return ops.ssum(vn + ve + taus)
    g = ad.grad_state(h_total, list(xs) + list(ps))
    nd = len(xs)
    return g[:nd], g[nd:]


def _sparse_dot(row, dense):
    cols = list(row)
    return ops.dot([row[c] for c in cols], [dense[c] for c in cols]) if cols else 0.0


def _chol_solve(S, rhs_list):
    """Solve S y = b for each b via an unrolled Cholesky factorization."""
    k = len(S)
    L = [[0.0] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1):
            s = S[i][j]
            if j > 0:
                s = s - ops.dot(L[i][:j], L[j][:j])
            if i == j:
                L[i][j] = ops.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    outs = []
    for b in rhs_list:
        y = [0.0] * k
        for i in range(k):
            s = b[i] - (ops.dot(L[i][:i], y[:i]) if i else 0.0)
            y[i] = s / L[i][i]
        z = [0.0] * k
        for i in range(k - 1, -1, -1):
            tail = [L[r][i] for r in range(i + 1, k)]
            s = y[i] - (ops.dot(tail, z[i + 1:]) if tail else 0.0)
            z[i] = s / L[i][i]
        outs.append(z)
    return outs


def _constrained_blocks(pview, spec, constraints, xs, ps, masses, edges):
    """Eq.-5 blocks with the block-structured multiplier solve.

    A = [[0, S], [-S, R]] with S = C M^-1 C^T (SPD), so lambda needs only two
    SPD solves; pivoted LU is not traceable, this is, and the solution is the
    same. Returns (xdot, pdot) as scalar-like lists.
    """
    nd = len(xs)
    dim = spec.dim
    gx, gp = _grad_full(pview, spec, xs, ps, masses, edges)
    vs = [p / masses[q // dim] for q, p in enumerate(ps)]
    C, G = constraints.sparse_rows(xs, vs)
    k = constraints.k
    inv_m = [1.0 / masses[q // dim] for q in range(nd)]

    def overlap(row_a, row_b):
        cols = [c for c in row_a if c in row_b]
        if not cols:
            return 0.0
        return ops.dot([row_a[c] * inv_m[c] for c in cols],
                       [row_b[c] for c in cols])

    S = [[overlap(C[i], C[j]) for j in range(k)] for i in range(k)]
    GMC = [[overlap(G[i], C[j]) for j in range(k)] for i in range(k)]
    R = [[GMC[i][j] - GMC[j][i] for j in range(k)] for i in range(k)]
    b1 = [_sparse_dot(C[r], gp) for r in range(k)]
    b2 = [_sparse_dot(G[r], gp)
          - _sparse_dot({c: v * inv_m[c] for c, v in C[r].items()}, gx)
          for r in range(k)]
    (y2,) = _chol_solve(S, [b1])
    rhs1 = [ops.dot(R[i], y2) - b2[i] for i in range(k)]
    (y1,) = _chol_solve(S, [rhs1])
    lam1 = [-u for u in y1]
    lam2 = [-u for u in y2]
    # B^T lambda: x-block C^T lam1 + G^T lam2; p-block (C M^-1)^T lam2
    corr_x = [0.0] * nd
    corr_p = [0.0] * nd
    for r in range(k):
        for c, v in C[r].items():
            corr_x[c] = corr_x[c] + v * lam1[r]
            corr_p[c] = corr_p[c] + v * inv_m[c] * lam2[r]
        for c, v in G[r].items():
            corr_x[c] = corr_x[c] + v * lam2[r]
    xdot = [gp[q] + corr_p[q] for q in range(nd)]
    pdot = [-(gx[q] + corr_x[q]) for q in range(nd)]
    return xdot, pdot


def _traced_step(pview, spec, constraints, z, dt, masses):
    """One velocity-Verlet step as tape operations; z is a list of Vars."""
    nd = spec.n * spec.dim
    xs, ps = list(z[:nd]), list(z[nd:])
    edges = gn.build_edges(spec)
    constrained = constraints is not None and constraints.k > 0
    if constrained:
        _, pdot0 = _constrained_blocks(pview, spec, constraints, xs, ps,
                                       masses, edges)
        p_half = [ps[q] + (0.5 * dt) * pdot0[q] for q in range(nd)]
        xdot_h, _ = _constrained_blocks(pview, spec, constraints, xs, p_half,
                                        masses, edges)
        x_new = [xs[q] + dt * xdot_h[q] for q in range(nd)]
        _, pdot1 = _constrained_blocks(pview, spec, constraints, x_new, p_half,
                                       masses, edges)
        p_new = [p_half[q] + (0.5 * dt) * pdot1[q] for q in range(nd)]
    else:
        gx0 = _grad_x_potential(pview, spec, xs, edges)
        p_half = [ps[q] - (0.5 * dt) * gx0[q] for q in range(nd)]
        v_h = _grad_p_kinetic(pview, spec, p_half, masses)
        x_new = [xs[q] + dt * v_h[q] for q in range(nd)]
        gx1 = _grad_x_potential(pview, spec, x_new, edges)
        p_new = [p_half[q] - (0.5 * dt) * gx1[q] for q in range(nd)]
    return x_new + p_new


def build_loss_program(params, spec, constraints, dt, example_z):
    """Trace the per-sample loss; inputs are [theta, z_t, z_target]."""
    if spec.kind is SystemKind.BINARY_LJ:
        raise DomainError("single-step training on the periodic mixture is "
                          "outside desk scale (topology changes per sample)")
    masses = [float(m) for m in spec.masses]
    nd = spec.n * spec.dim
    tape = ad.Tape()
    theta = tape.inputs(params.flat())
    z_in = tape.inputs(example_z[: 2 * nd])
    z_tgt = tape.inputs(example_z[2 * nd:])
    with tape:
        pview = _ParamsView(params, theta)
        z_hat = _traced_step(pview, spec, constraints, z_in, dt, masses)
        err = [z_hat[q] - z_tgt[q] for q in range(2 * nd)]
        loss = ops.dot(err, err)
    prog = ad.Program(tape, loss)
    return prog


def loss_of_field(field, constraints, pairs, dt):
    """Reference loss through the generic integrator (no tracing)."""
    total = 0.0
    for a, b in pairs:
        pred = velocity_verlet_step(field, constraints, a, dt).state
        err = pred.flat_z() - b.flat_z()
        total += float(err @ err)
    return total / len(pairs)


def loss(params, pairs, spec, constraints=None, dt=None):
    """Mean over the batch of the summed squared single-step state error."""
    field = gn.energy_field(params, spec)
    return loss_of_field(field, constraints, pairs, dt)


def train(params, dataset, config):
    """Adam on the traced loss; returns (best ModelParams, history).

    history rows are (epoch, train_loss, val_loss). The best-validation
    parameters are returned; the stop rule ends training once the relative
    train-loss decrease over `stop_window` epochs falls below `stop_delta`.
    """
    spec = dataset.spec
    constraints = None
    if spec.constraint_count:
        from .systems import hybrid_constraints, pendulum_constraints
        constraints = (pendulum_constraints(spec)
                       if spec.kind is SystemKind.PENDULUM
                       else hybrid_constraints(spec))
    n_theta = params.n_params()
    train_rows = dataset.rows(dataset.train_idx)
    val_rows = dataset.rows(dataset.val_idx)
    if config.batch > len(train_rows):
        raise DomainError("batch size exceeds the training split")
    prog = build_loss_program(params, spec, constraints, dataset.dt,
                              train_rows[0])
    theta = params.flat()
    adam = Adam(n_theta, config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    history = []
    best_val = math.inf
    best_theta = theta.copy()
    train_curve = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_rows))
        epoch_loss = 0.0
        for lo in range(0, len(order) - config.batch + 1, config.batch):
            batch = train_rows[order[lo: lo + config.batch]]
            prog.set_inputs(0, theta)
            mean_loss, grad = prog.batch_mean_and_grad(n_theta, batch, n_theta)
            if mean_loss > 1e6 or not np.isfinite(mean_loss):
                raise DivergenceError(f"training loss diverged: {mean_loss}")
            if config.lr != 0.0:
                theta = adam.step(theta, grad)
            epoch_loss += mean_loss
        n_batches = len(order) // config.batch
        train_loss = epoch_loss / max(n_batches, 1)
        prog.set_inputs(0, theta)
        val_loss = float(np.mean(prog.run_rows(val_rows, row_lo=n_theta)))
        history.append((epoch, train_loss, val_loss))
        train_curve.append(train_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_theta = theta.copy()
        # stop once the best train loss has stagnated over the window
        # (comparing running bests is robust to transient oscillation)
        best_curve = np.minimum.accumulate(train_curve)
        if epoch > config.stop_window:
            past = best_curve[-config.stop_window - 1]
            if past - best_curve[-1] < config.stop_delta * abs(past):
                break
    out = params.with_flat(best_theta)
    out.meta = dict(params.meta)
    out.meta.update({
        "ranges": dataset.ranges,
        "epochs": len(history),
        "best_val_loss": best_val,
        "final_train_loss": history[-1][1] if history else None,
        "kind": spec.kind.value,
        "n_train": len(train_rows),
        "dt": dataset.dt,
    })
    return out, history
