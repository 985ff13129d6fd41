import numpy as np
import pytest

from hdlearn import systems as sy
from hdlearn.errors import ShapeMismatchError
from hdlearn.state import (PhaseState, SystemSpec, Trajectory, minimum_image,
                           momentum_of, total_momentum)


def test_momentum_of_examples():
    spec = SystemSpec(kind="spring", n=1, dim=2, masses=[2.0], types=[0],
                      edges=[], constants={"k": 1.0, "r0": 1.0})
    assert np.array_equal(momentum_of(spec, [[1.0, 0.0]]), [[2.0, 0.0]])

    spec2 = sy.spring_spec(2)
    assert np.array_equal(momentum_of(spec2, np.zeros((2, 2))), np.zeros((2, 2)))

    spec3 = SystemSpec(kind="spring", n=1, dim=2, masses=[1.5], types=[0],
                       edges=[], constants={})
    assert np.array_equal(momentum_of(spec3, [[2.0, -2.0]]), [[3.0, -3.0]])


def test_momentum_of_shape_mismatch():
    spec = sy.spring_spec(3)
    with pytest.raises(ShapeMismatchError):
        momentum_of(spec, np.zeros((2, 2)))


def test_total_momentum_examples():
    spec = sy.spring_spec(2)
    st = PhaseState.from_xv(spec, [[0, 0], [1, 0]], [[1, 0], [-1, 0]])
    assert np.array_equal(total_momentum(st), [0.0, 0.0])
    spec1 = sy.gravitational_spec(2)
    st1 = PhaseState.from_xv(spec1, [[0, 0], [1, 1]], [[3, 4], [0, 0]])
    assert np.array_equal(total_momentum(st1), [3.0, 4.0])


def test_total_momentum_constant_along_spring_trajectory():
    spec = sy.spring_spec(5)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 3)
    traj = sy.generate_trajectory(system, init, steps=10_000, stride=500)
    m0 = total_momentum(traj.frames[0])
    drift = max(np.linalg.norm(total_momentum(f) - m0) for f in traj.frames)
    assert drift / np.linalg.norm(m0) < 1e-8


def test_minimum_image_examples():
    assert minimum_image(3.9, 3.968) == pytest.approx(-0.068)
    assert minimum_image(0.5, 3.968) == 0.5
    assert minimum_image(-2.1, 4.0) == pytest.approx(1.9)


def test_minimum_image_idempotent_and_range():
    rng = np.random.default_rng(0)
    dx = rng.uniform(-50, 50, size=1000)
    box = 3.968
    once = minimum_image(dx, box)
    assert np.array_equal(minimum_image(once, box), once)
    assert np.all(once >= -box / 2) and np.all(once < box / 2)


def test_momentum_roundtrip_recovers_velocity():
    spec = sy.spring_spec(4)
    rng = np.random.default_rng(1)
    v = rng.normal(size=(4, 2))
    p = momentum_of(spec, v)
    assert np.array_equal(p / np.asarray(spec.masses)[:, None], v)


def test_phase_state_invariants():
    spec = sy.spring_spec(3)
    st = sy.sample_initial(spec, 0)
    assert st.x.shape == st.v.shape == st.p.shape == (3, 2)
    assert np.array_equal(st.p, st.v * np.asarray(spec.masses)[:, None])
    with pytest.raises(ShapeMismatchError):
        PhaseState(x=np.zeros((3, 2)), v=np.zeros((3, 2)), p=np.zeros((2, 2)))


def test_spec_validation():
    with pytest.raises(ValueError):
        SystemSpec(kind="spring", n=2, dim=2, masses=[1.0, -1.0], types=[0, 0],
                   edges=[], constants={})
    with pytest.raises(ValueError):
        SystemSpec(kind="spring", n=2, dim=2, masses=[1.0, 1.0], types=[0, 0],
                   edges=[(0, 0)], constants={})
    with pytest.raises(ValueError):
        SystemSpec(kind="spring", n=2, dim=2, masses=[1.0, 1.0], types=[0, 0],
                   edges=[(0, 2)], constants={})


def test_spec_json_roundtrip(tmp_path):
    for spec in (sy.pendulum_spec(3), sy.lj_spec(10), sy.hybrid_spec()):
        path = tmp_path / "spec.json"
        spec.save(path)
        back = SystemSpec.load(path)
        assert back.kind == spec.kind and back.n == spec.n
        assert np.array_equal(back.masses, spec.masses)
        assert back.edges == spec.edges
        assert back.constants == spec.constants
        assert back.subsystems == spec.subsystems


def test_trajectory_csv_roundtrip_exact(tmp_path):
    spec = sy.spring_spec(3)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 7)
    traj = sy.generate_trajectory(system, init, steps=50, stride=10)
    traj.check_spacing()
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "frame,time,particle,type,x0,x1,v0,v1"
    back = Trajectory.read_csv(path, spec, dt=traj.dt, stride=traj.stride)
    assert len(back) == len(traj)
    for a, b in zip(traj.frames, back.frames):
        assert np.array_equal(a.x, b.x)  # 17 significant digits round-trip
        assert np.array_equal(a.v, b.v)
