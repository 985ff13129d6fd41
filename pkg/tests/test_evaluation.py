import numpy as np
import pytest

from hdlearn import evaluation as ev
from hdlearn import graphnet as gn
from hdlearn import systems as sy
from hdlearn.errors import DomainError


def test_energy_violation_examples():
    assert np.all(ev.energy_violation([1.0, 2.0], [1.0, 2.0]) == 0.0)
    assert ev.energy_violation([1.0], [2.0])[0] == pytest.approx(1 / 3)
    assert ev.energy_violation([0.0], [0.0])[0] == 0.0
    with pytest.raises(DomainError):
        ev.energy_violation([1.0, 2.0], [1.0])


def test_momentum_error_examples():
    m = np.array([[1.0, 0.0]])
    assert ev.momentum_error(m, m)[0] == 0.0
    assert ev.momentum_error(np.array([[-1.0, 0.0]]),
                             np.array([[1.0, 0.0]]))[0] == pytest.approx(1.0)
    zero = np.zeros((1, 2))
    assert ev.momentum_error(zero, zero)[0] == 0.0


def test_error_ratios_symmetric_and_scale_invariant():
    rng = np.random.default_rng(0)
    a = rng.normal(size=50)
    b = rng.normal(size=50)
    assert np.allclose(ev.energy_violation(a, b), ev.energy_violation(b, a))
    s = 3.7
    assert np.allclose(ev.energy_violation(s * a, s * b),
                       ev.energy_violation(a, b))
    ma = rng.normal(size=(50, 3))
    mb = rng.normal(size=(50, 3))
    assert np.allclose(ev.momentum_error(ma, mb), ev.momentum_error(mb, ma))
    assert np.allclose(ev.momentum_error(s * ma, s * mb),
                       ev.momentum_error(ma, mb))
    assert np.all(ev.energy_violation(a, b) <= 1.0)
    assert np.all(ev.momentum_error(ma, mb) <= 1.0)


def test_compare_quantities_self_comparison_is_zero():
    spec = sy.spring_spec(4)
    system = sy.analytic_system(spec)
    traj = sy.generate_trajectory(system, sy.sample_initial(spec, 2),
                                  steps=200, stride=20)
    series = ev.compare_quantities(system.field, system, traj)
    assert np.max(np.abs(series.pred_forces - series.true_forces)) == 0.0


def test_compare_quantities_random_model_finite():
    spec = sy.spring_spec(3)
    system = sy.analytic_system(spec)
    traj = sy.generate_trajectory(system, sy.sample_initial(spec, 3),
                                  steps=100, stride=20)
    params = gn.init_params(gn.default_hyper("spring"), 0)
    series = ev.compare_quantities(params, system, traj)
    assert np.all(np.isfinite(series.pred_forces))
    assert series.force_mse() > 0.0
    dt_err, dv_err = series.centered_energy_errors()
    assert np.all(np.isfinite(dt_err)) and np.all(np.isfinite(dv_err))


def test_rollout_comparison_perfect_model():
    spec = sy.spring_spec(3)
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 4)
    series = ev.rollout_comparison(system.field, system, init, 1e-3, 200, 20)
    assert np.max(series.ee) == 0.0
    assert np.max(series.me) == 0.0


def test_transfer_harness_degenerate_equals_fresh_seeds():
    spec = sy.spring_spec(3)
    params = gn.init_params(gn.default_hyper("spring"), 1)
    per_seed, summary = ev.transfer_harness(params, spec, seeds=[0, 1],
                                            steps=50, stride=10)
    assert sorted(per_seed) == [0, 1] == summary["seeds"]
    system = sy.analytic_system(spec)
    init = sy.sample_initial(spec, 0)
    direct = ev.rollout_comparison(params, system, init,
                                   sy.DEFAULT_DT[spec.kind], 50, 10)
    assert np.array_equal(per_seed[0].ee, direct.ee)
