"""Rollout-based model evaluation: energy-violation and momentum-error
curves, per-frame energy/force comparison, and the size-transfer harness.

Both error ratios use the symmetric normalization e = |a - b| / (|a| + |b|)
(norms for vectors), with 0/0 defined as 0, so they live in [0, 1].
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import graphnet as gn
from . import systems as sy
from .dynamics import rollout
from .errors import DomainError
from .state import total_momentum


def energy_violation(true_h, pred_h):
    """Per-time |pred - true| / (|pred| + |true|); 0/0 -> 0."""
    true_h = np.asarray(true_h, dtype=float)
    pred_h = np.asarray(pred_h, dtype=float)
    if true_h.shape != pred_h.shape:
        raise DomainError("energy series must have equal lengths")
    num = np.abs(pred_h - true_h)
    den = np.abs(pred_h) + np.abs(true_h)
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def momentum_error(true_m, pred_m):
    """Per-time vector-norm ratio with the same 0/0 convention."""
    true_m = np.asarray(true_m, dtype=float)
    pred_m = np.asarray(pred_m, dtype=float)
    if true_m.shape != pred_m.shape:
        raise DomainError("momentum series must have equal shapes")
    num = np.linalg.norm(pred_m - true_m, axis=-1)
    den = np.linalg.norm(pred_m, axis=-1) + np.linalg.norm(true_m, axis=-1)
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


@dataclass
class MetricSeries:
    """Per-frame comparison data for one evaluation run."""

    times: np.ndarray
    ee: np.ndarray = None
    me: np.ndarray = None
    true_T: np.ndarray = None
    pred_T: np.ndarray = None
    true_V: np.ndarray = None
    pred_V: np.ndarray = None
    true_forces: np.ndarray = None
    pred_forces: np.ndarray = None
    extra: dict = dc_field(default_factory=dict)

    def force_mse(self):
        return float(np.mean((self.pred_forces - self.true_forces) ** 2))

    def centered_energy_errors(self):
        """Energy errors after removing each series' mean (additive gauge)."""
        dt_ = (self.pred_T - self.pred_T.mean()) - (self.true_T - self.true_T.mean())
        dv = (self.pred_V - self.pred_V.mean()) - (self.true_V - self.true_V.mean())
        return dt_, dv


def _field_of(model, spec):
    if isinstance(model, gn.ModelParams):
        return gn.energy_field(model, spec)
    return model  # already a HamiltonianField


def compare_quantities(model, system, traj):
    """Evaluate predicted T, V, and forces against analytic values along a
    ground-truth trajectory; energies are compared after mean-centering
    (the learned energy carries an arbitrary additive constant), forces raw.
    """
    spec = system.spec
    field = _field_of(model, spec)
    nd = spec.n * spec.dim
    n_frames = len(traj.frames)
    pred_T = np.empty(n_frames)
    pred_V = np.empty(n_frames)
    true_T = np.empty(n_frames)
    true_V = np.empty(n_frames)
    pred_F = np.empty((n_frames, nd))
    true_F = np.empty((n_frames, nd))
    traced = getattr(field, "traced", None)
    for q, frame in enumerate(traj.frames):
        if traced is not None:
            prog = traced.program_for(frame)
            outs, grad = prog.outputs_and_grad(frame.flat_z(), output=2)
            t_pred, v_pred = outs[0], outs[1]
        else:
            grad = field.grad_z(frame)
            t_pred, v_pred = np.nan, np.nan
        pred_T[q] = t_pred
        pred_V[q] = v_pred
        pred_F[q] = -grad[:nd]
        true_F[q] = -system.field.grad_z(frame)[:nd]
        true_T[q] = sy.kinetic_energy(spec, frame)
        true_V[q] = system.hamiltonian(frame) - true_T[q]
    return MetricSeries(times=traj.times(), true_T=true_T, pred_T=pred_T,
                        true_V=true_V, pred_V=pred_V,
                        true_forces=true_F, pred_forces=pred_F)


def rollout_comparison(model, system, init, dt, steps, stride, constraints=None):
    """Roll the model and the truth from one initial state; EE compares the
    analytic energy along the two trajectories, ME the total momenta."""
    spec = system.spec
    field = _field_of(model, spec)
    if constraints is None:
        constraints = system.constraint
    pred = rollout(field, constraints, init, dt, steps, stride, spec=spec)
    true = rollout(system.field, system.constraint, init, dt, steps, stride,
                   spec=spec)
    h_pred = np.array([system.hamiltonian(f) for f in pred.frames])
    h_true = np.array([system.hamiltonian(f) for f in true.frames])
    m_pred = np.array([total_momentum(f) for f in pred.frames])
    m_true = np.array([total_momentum(f) for f in true.frames])
    series = MetricSeries(times=true.times(),
                          ee=energy_violation(h_true, h_pred),
                          me=momentum_error(m_true, m_pred))
    series.extra["pred_traj"] = pred
    series.extra["true_traj"] = true
    return series


def transfer_harness(model, spec_large, seeds, steps=1000, stride=10, dt=None):
    """Zero-shot size transfer: evaluate a trained model on a larger spec.

    Returns (per-seed MetricSeries dict, summary dict of median EE/ME)."""
    system = sy.analytic_system(spec_large)
    dt = sy.DEFAULT_DT[spec_large.kind] if dt is None else dt
    per_seed = {}
    for seed in sorted(int(s) for s in seeds):
        init = sy.sample_initial(spec_large, seed)
        per_seed[seed] = rollout_comparison(model, system, init, dt, steps,
                                            stride)
    ee = np.concatenate([s.ee for s in per_seed.values()])
    me = np.concatenate([s.me for s in per_seed.values()])
    summary = {"median_ee": float(np.median(ee)),
               "median_me": float(np.median(me)),
               "max_ee": float(np.max(ee)),
               "seeds": sorted(per_seed)}
    return per_seed, summary
