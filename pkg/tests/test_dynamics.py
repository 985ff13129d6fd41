import math

import numpy as np
import pytest

from hdlearn import systems as sy
from hdlearn.dynamics import (HamiltonianField, constrained_rhs, rollout,
                              solve_lambda, unconstrained_rhs,
                              velocity_verlet_step)
from hdlearn.state import PhaseState


def scalar_field(grad_x, grad_p, value=lambda s: 0.0, separable=False):
    """1-particle, 1-dof field from scalar gradient callables."""
    def grad_z(state):
        return np.array([grad_x(state.x[0, 0], state.p[0, 0]),
                         grad_p(state.x[0, 0], state.p[0, 0])])
    return HamiltonianField(value=lambda s: value(s), grad_z=grad_z,
                            masses=np.ones(1), separable=separable)


def point(x, p, t=0.0):
    return PhaseState(x=np.array([[x]]), v=np.array([[p]]),
                      p=np.array([[p]]), time=t)


def test_unconstrained_rhs_free_particle():
    field = scalar_field(lambda x, p: 0.0, lambda x, p: p)
    zdot = unconstrained_rhs(field, point(0.0, 2.0))
    assert np.array_equal(zdot, [2.0, 0.0])


def test_unconstrained_rhs_harmonic():
    field = scalar_field(lambda x, p: x, lambda x, p: p)
    zdot = unconstrained_rhs(field, point(1.0, 0.0))
    assert np.array_equal(zdot, [0.0, -1.0])


def test_unconstrained_rhs_spring_forces_match_hand_derivation():
    spec = sy.spring_spec(5)
    system = sy.analytic_system(spec)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(scale=1.0, size=(5, 2)) + sy.sample_initial(spec, 1).x
        v = rng.normal(size=(5, 2))
        st = PhaseState.from_xv(spec, x, v)
        zdot = unconstrained_rhs(system.field, st)
        # hand-derived: F_i = -sum_j k (r - r0) unit(x_i - x_j)
        f = np.zeros((5, 2))
        for i, j in spec.edges:
            d = x[i] - x[j]
            r = np.linalg.norm(d)
            f[i] -= (r - 1.0) * d / r
            f[j] += (r - 1.0) * d / r
        assert np.allclose(zdot[10:], f.ravel(), atol=1e-8)
        assert np.allclose(zdot[:10], v.ravel(), atol=1e-12)


def test_solve_lambda_empty_constraints():
    field = scalar_field(lambda x, p: 0.0, lambda x, p: p)
    assert solve_lambda(field, None, point(0.0, 1.0)).size == 0


def test_solve_lambda_statics_oracle():
    # bob at rest at (0,-1): rod reaction exactly balances the field
    spec = sy.pendulum_spec(1)
    system = sy.analytic_system(spec)
    st = PhaseState.from_xv(spec, [[0.0, -1.0]], [[0.0, 0.0]])
    zdot, lam = constrained_rhs(system.field, system.constraint, st)
    assert np.max(np.abs(zdot)) < 1e-12
    assert lam.shape == (2,)


def test_constrained_zdot_substitutes_back():
    spec = sy.pendulum_spec(3)
    system = sy.analytic_system(spec)
    for seed in range(5):
        init = sy.sample_initial(spec, seed)
        st = PhaseState.from_xp(spec, init.x,
                                np.random.default_rng(seed).normal(size=(3, 2)))
        # project momenta onto the constraint tangent space first
        B = system.constraint.jacobian(st)
        zdot, lam = constrained_rhs(system.field, system.constraint, st)
        assert np.max(np.abs(B @ zdot)) < 1e-8


def test_constrained_reduces_to_unconstrained_without_constraints():
    spec = sy.spring_spec(4)
    system = sy.analytic_system(spec)
    rng = np.random.default_rng(3)
    for _ in range(50):
        st = PhaseState.from_xv(spec, rng.normal(size=(4, 2)) * 2.0,
                                rng.normal(size=(4, 2)))
        a = unconstrained_rhs(system.field, st)
        b, lam = constrained_rhs(system.field, None, st)
        assert lam.size == 0
        assert np.array_equal(a, b)


def test_single_pendulum_acceleration_oracle():
    spec = sy.pendulum_spec(1)
    system = sy.analytic_system(spec)
    g = spec.constants["g"]
    rng = np.random.default_rng(8)
    for _ in range(100):
        theta = rng.uniform(-math.pi, math.pi)
        thetadot = rng.uniform(-2, 2)
        x = np.array([[math.sin(theta), math.cos(theta)]])
        v = thetadot * np.array([[math.cos(theta), -math.sin(theta)]])
        st = PhaseState.from_xv(spec, x, v)
        zdot, _ = constrained_rhs(system.field, system.constraint, st)
        pdot = zdot[2:].reshape(1, 2)
        tangent = np.array([math.cos(theta), -math.sin(theta)])
        theta_dd = float(pdot[0] @ tangent)
        assert abs(theta_dd - (-g * math.sin(theta))) < 1e-6


def test_verlet_constant_force_exact():
    F = 1.75
    field = scalar_field(lambda x, p: -F, lambda x, p: p, separable=True)
    st = point(0.3, 0.4)
    dt = 0.01
    out = velocity_verlet_step(field, None, st, dt).state
    # exact up to the rounding of the two half-kicks
    assert out.x[0, 0] == pytest.approx(0.3 + 0.4 * dt + 0.5 * F * dt * dt, rel=1e-14)
    assert out.p[0, 0] == pytest.approx(0.4 + F * dt, rel=1e-14)


def test_verlet_zero_dt_identity():
    field = scalar_field(lambda x, p: x, lambda x, p: p)
    st = point(1.0, -2.0)
    assert velocity_verlet_step(field, None, st, 0.0).state is st


def test_verlet_harmonic_energy_bound():
    field = scalar_field(lambda x, p: x, lambda x, p: p, separable=True)
    st = point(1.0, 0.0)
    h = lambda s: 0.5 * (s.x[0, 0] ** 2 + s.p[0, 0] ** 2)
    h0 = h(st)
    worst = 0.0
    for k in range(100_000):
        st = velocity_verlet_step(field, None, st, 1e-3).state
        if (k + 1) % 5000 == 0:
            worst = max(worst, abs(h(st) - h0))
    assert worst / h0 < 1e-6


def test_rollout_zero_steps():
    spec = sy.spring_spec(3)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 1)
    traj = rollout(system.field, None, init, 1e-3, 0, 1, spec=spec)
    assert traj.frames == [init]


def test_rollout_equals_generate_trajectory():
    spec = sy.spring_spec(5)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 2)
    a = rollout(system.field, system.constraint, init, 1e-3, 500, 10, spec=spec)
    b = sy.generate_trajectory(system, init, dt=1e-3, steps=500, stride=10)
    for fa, fb in zip(a.frames, b.frames):
        assert np.max(np.abs(fa.x - fb.x)) < 1e-12
        assert np.max(np.abs(fa.p - fb.p)) < 1e-12


def test_time_reversal_unconstrained():
    spec = sy.spring_spec(4)
    system = sy.analytic_system(spec)
    st0 = sy.sample_initial(spec, 6)
    st = st0
    for _ in range(500):
        st = velocity_verlet_step(system.field, None, st, 1e-3).state
    for _ in range(500):
        st = velocity_verlet_step(system.field, None, st, -1e-3).state
    assert np.max(np.abs(st.x - st0.x)) < 1e-6
    assert np.max(np.abs(st.p - st0.p)) < 1e-6


def test_energy_drift_has_no_secular_growth():
    spec = sy.spring_spec(5)
    system = sy.analytic_system(spec)
    st = sy.sample_initial(spec, 3)
    h0 = system.hamiltonian(st)
    drift_1k = drift_10k = 0.0
    for k in range(10_000):
        st = velocity_verlet_step(system.field, None, st, 1e-3).state
        d = abs(system.hamiltonian(st) - h0) if (k + 1) % 100 == 0 else None
        if d is not None:
            drift_10k = max(drift_10k, d)
            if k < 1000:
                drift_1k = max(drift_1k, d)
    assert drift_10k < 10 * drift_1k
