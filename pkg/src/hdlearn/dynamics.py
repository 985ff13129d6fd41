"""Equations of motion for differentiable Hamiltonians with optional
Pfaffian constraints, and the velocity-Verlet integrator built on them.

State layout throughout: Z = [x; p] flattened to a vector of length 2 n D.
The symplectic block matrix J = [0, I; -I, 0] is never materialized; `j_apply`
performs the block swap directly.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg

from .errors import IntegrationError, NonFiniteError, SingularConstraintError
from .state import PhaseState, Trajectory

# Looser than the constraint tolerances asserted in tests: a runtime guard
# against grossly invalid states, not a drift gate. Learned fields drift
# secularly (no restoring force on the residual), so this only catches
# blow-ups that would make the multiplier solve meaningless.
_CONSTRAINT_GUARD = 1e-2

_LSTSQ_CUTOFF = 1e-10
_PIVOT_RATIO = 1e-12


@dataclass(frozen=True)
class HamiltonianField:
    """A differentiable Hamiltonian: total energy and its state gradient.

    value(state) -> scalar H; grad_z(state) -> length-2nD vector of
    (dH/dx, dH/dp). `masses` are needed to rebuild intermediate states.
    `separable` marks fields whose dH/dp is exactly M^-1 p (all analytic
    systems here), allowing the integrator to skip a redundant gradient.
    """

    value: object
    grad_z: object
    masses: np.ndarray
    separable: bool = False

    def rebuild(self, x, p, time):
        return PhaseState(x=x, p=p, v=p / self.masses[:, None], time=time)


@dataclass(frozen=True)
class StepResult:
    state: PhaseState
    lam: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))


def j_apply(a):
    """J @ a for the block matrix J = [0, I; -I, 0]; a has 2nD leading rows."""
    nd = a.shape[0] // 2
    return np.concatenate([a[nd:], -a[:nd]], axis=0)


def unconstrained_rhs(field, state):
    """Zdot = J grad_Z H."""
    g = field.grad_z(state)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite Hamiltonian gradient")
    return j_apply(g)


def _solve_multipliers(B, g):
    """lambda = -[B J B^T]^{-1} [B J grad_Z H] by LU with partial pivoting;
    a rank-deficiency signal (tiny pivot ratio) triggers a least-squares
    fallback with singular-value cutoff."""
    A = B @ j_apply(B.T)
    b = B @ j_apply(g)
    try:
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= _PIVOT_RATIO * max(diag.max(), 1e-300):
            raise scipy.linalg.LinAlgError("rank-deficient constraint system")
        lam = -scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        try:
            lam, *_ = np.linalg.lstsq(A, -b, rcond=_LSTSQ_CUTOFF)
        except np.linalg.LinAlgError as exc:
            raise SingularConstraintError(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise SingularConstraintError("constraint solve produced non-finite multipliers")
    return lam


def _check_on_constraint(constraints, state):
    phi = constraints.phi(state.x)
    worst = float(np.max(np.abs(phi)))
    if worst > _CONSTRAINT_GUARD:
        raise IntegrationError(f"state violates constraints by {worst:.3g}")


def solve_lambda(field, constraints, state):
    """Constraint multipliers for one state (see _solve_multipliers)."""
    if constraints is None or constraints.k == 0:
        return np.zeros(0)
    _check_on_constraint(constraints, state)
    return _solve_multipliers(constraints.jacobian(state), field.grad_z(state))


def constrained_rhs(field, constraints, state):
    """Zdot from the constrained equations; reduces exactly to the
    unconstrained form when there are no constraints.

    Returns (zdot, lambda).
    """
    if constraints is None or constraints.k == 0:
        return unconstrained_rhs(field, state), np.zeros(0)
    _check_on_constraint(constraints, state)
    B = constraints.jacobian(state)
    g = field.grad_z(state)
    lam = _solve_multipliers(B, g)
    return j_apply(g + B.T @ lam), lam


def velocity_verlet_step(field, constraints, state, dt):
    """One half-kick / drift / half-kick step.

    The force is the pdot block of the constrained equations, recomputed at
    the drifted position; the drift velocity is the xdot block evaluated at
    the half-kicked momenta, which for separable analytic Hamiltonians equals
    M^-1 p exactly and for learned ones keeps the kinetic head in the loop.
    """
    if dt == 0.0:
        return StepResult(state, np.zeros(0))
    n, d = state.x.shape
    nd = n * d
    unconstrained = constraints is None or constraints.k == 0
    zd0, _ = constrained_rhs(field, constraints, state)
    p_half = state.p + (0.5 * dt) * zd0[nd:].reshape(n, d)
    if unconstrained and field.separable:
        # xdot block would be exactly M^-1 p_half; skip the evaluation
        v_half = p_half / field.masses[:, None]
        x_new = state.x + dt * v_half
    else:
        mid = field.rebuild(state.x, p_half, state.time)
        zd_h, _ = constrained_rhs(field, constraints, mid)
        x_new = state.x + dt * zd_h[:nd].reshape(n, d)
    drifted = field.rebuild(x_new, p_half, state.time)
    zd1, lam1 = constrained_rhs(field, constraints, drifted)
    p_new = p_half + (0.5 * dt) * zd1[nd:].reshape(n, d)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(p_new))):
        raise NonFiniteError("velocity-Verlet produced a non-finite state")
    return StepResult(field.rebuild(x_new, p_new, state.time + dt), lam1)


def rollout(field, constraints, init, dt, steps, stride, *, spec=None,
            store_successors=False):
    """Repeated velocity-Verlet steps, recording every `stride` steps."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    frames = [init]
    successors = [] if store_successors else None
    pending = store_successors  # frame 0 awaits its one-step successor
    state = init
    for k in range(1, steps + 1):
        try:
            state = velocity_verlet_step(field, constraints, state, dt).state
        except (NonFiniteError, IntegrationError) as exc:
            raise IntegrationError(f"integration failed at step {k}: {exc}",
                                   step=k) from exc
        if pending:
            successors.append(state)
            pending = False
        if k % stride == 0:
            frames.append(state)
            pending = store_successors
    if pending:
        # the final recorded frame still needs its successor
        successors.append(velocity_verlet_step(field, constraints, state, dt).state)
    return Trajectory(spec=spec, frames=frames, dt=dt, stride=stride,
                      successors=successors)
