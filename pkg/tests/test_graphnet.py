import numpy as np
import pytest

from hdlearn import autodiff as ad
from hdlearn import graphnet as gn
from hdlearn import systems as sy
from hdlearn.errors import CheckpointError, DomainError
from hdlearn.state import PhaseState, SubSystem, SystemSpec


@pytest.fixture(scope="module")
def spring_setup():
    spec = sy.spring_spec(5)
    params = gn.init_params(gn.default_hyper("spring"), 3)
    state = sy.sample_initial(spec, 1)
    return spec, params, state


def test_init_params_deterministic_and_bounded():
    hyper = gn.default_hyper("spring")
    a = gn.init_params(hyper, 7)
    b = gn.init_params(hyper, 7)
    for k in a.weights:
        assert np.array_equal(a.weights[k], b.weights[k])
        if ".W" in k:
            fan_out, fan_in = a.weights[k].shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(a.weights[k]) < bound)
        else:
            assert np.all(a.weights[k] == 0.0)


def test_embed_properties(spring_setup):
    spec, params, state = spring_setup
    h0t, h0v, h0e = gn.embed(params, [0, 0, 1], [1.0, 0.5])
    assert h0t[0] is h0t[1]          # same species share the embedding
    assert h0t[0] != h0t[2] or h0v[0] != h0v[2]
    for vec in h0t + h0v + h0e:
        assert len(vec) == params.hyper["embed_dim"]
        assert all(u > 0.0 for u in vec)   # squareplus range
    with pytest.raises(DomainError):
        gn.embed(params, [2], [])


def test_message_pass_zero_rounds_is_identity(spring_setup):
    spec, params, state = spring_setup
    p0 = gn.ModelParams(hyper=dict(params.hyper), weights=params.weights,
                        seed=params.seed)
    p0.hyper["layers"] = 0
    h0t, h0v, h0e = gn.embed(p0, [0, 0], [1.0, 1.0])
    zn, ze = gn.message_pass(p0, h0v, h0e, [(0, 1), (1, 0)], 2)
    assert zn == h0v and ze == h0e


def test_message_pass_isolated_node(spring_setup):
    spec, params, _ = spring_setup
    h0t, h0v, h0e = gn.embed(params, [0], [])
    zn, _ = gn.message_pass(params, h0v, [], [], 1)
    # empty neighbor sum reduces the update to sp(MLP(h))
    from hdlearn.graphnet import _mlp, _sp_vec
    expect = _sp_vec(_mlp(params.weights, "mp0.node_mlp",
                          params.hyper["depth"], h0v[0]))
    assert zn[0] == expect


def test_kinetic_head_positive_and_position_free(spring_setup):
    spec, params, state = spring_setup
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=2)
        tau = gn.kinetic_terms(params, spec, list(v) * spec.n, owned=[0])[0]
        assert tau > 0.0
    # translating positions cannot change tau: x is not an input
    vs = list(rng.normal(size=2 * spec.n))
    t1 = gn.kinetic_terms(params, spec, vs)
    t2 = gn.kinetic_terms(params, spec, vs)
    assert t1 == t2


def test_edge_head_depends_only_on_distance(spring_setup):
    spec, params, _ = spring_setup
    pspec = sy.spring_spec(2)
    edges = gn.directed_edges([(0, 1)])
    xs_a = [0.0, 0.0, 1.3, 0.0]
    xs_b = [5.0, 5.0, 5.0 + 1.3, 5.0]  # same distance, shifted
    _, ve_a = gn.potential_terms(params, pspec, xs_a, edges)
    _, ve_b = gn.potential_terms(params, pspec, xs_b, edges)
    assert ve_a == pytest.approx(ve_b, rel=1e-12)


def test_node_head_varies_with_position(spring_setup):
    spec, params, _ = spring_setup
    vn_a, _ = gn.potential_terms(params, spec, [0.0, 0.0] * spec.n, gn.build_edges(spec))
    vn_b, _ = gn.potential_terms(params, spec, [0.0, 1.0] * spec.n, gn.build_edges(spec))
    assert vn_a != vn_b


def test_hamiltonian_finite_and_breakdown_consistent(spring_setup):
    spec, params, state = spring_setup
    eb = gn.hamiltonian(params, spec, state)
    assert np.isfinite(eb.H)
    assert eb.H == pytest.approx(sum(eb.tau) + sum(eb.V_nodes) + sum(eb.V_edges),
                                 abs=1e-12)
    assert eb.T == pytest.approx(sum(eb.tau), abs=1e-12)


def test_hamiltonian_permutation_invariance_exact(spring_setup):
    spec, params, state = spring_setup
    rng = np.random.default_rng(5)
    h0 = gn.hamiltonian(params, spec, state).H
    for _ in range(100):
        perm = rng.permutation(spec.n)
        x_p = np.empty_like(state.x)
        v_p = np.empty_like(state.v)
        x_p[perm] = state.x
        v_p[perm] = state.v
        edges_p = [(int(perm[i]), int(perm[j])) for i, j in spec.edges]
        spec_p = SystemSpec(kind="spring", n=spec.n, dim=2,
                            masses=np.ones(spec.n),
                            types=np.zeros(spec.n, dtype=int),
                            edges=edges_p, constants=spec.constants)
        st_p = PhaseState.from_xv(spec_p, x_p, v_p)
        assert gn.hamiltonian(params, spec_p, st_p).H == h0


def test_edge_potential_translation_invariance_exact(spring_setup):
    # dyadic-grid positions and shifts make float adds exact, so the
    # distance (and thus every v_ij) is reproduced bit for bit
    spec, params, _ = spring_setup
    rng = np.random.default_rng(6)
    edges = gn.build_edges(spec)
    for _ in range(100):
        x = rng.integers(-2048, 2048, size=(spec.n, 2)) / 1024.0
        shift = rng.integers(-64, 64, size=2) * 4.0
        xs = [float(c) for c in x.ravel()]
        xs_shifted = [float(c) for c in (x + shift).ravel()]
        _, ve = gn.potential_terms(params, spec, xs, edges)
        _, ve_s = gn.potential_terms(params, spec, xs_shifted, edges)
        assert ve == ve_s


def test_gradients_decouple_kinetic_and_potential(spring_setup):
    spec, params, state = spring_setup
    field = gn.energy_field(params, spec)
    prog = field.traced.program_for(state)
    nd = spec.n * spec.dim
    # T output gradient w.r.t. positions and V output w.r.t. momenta: zero
    _, grad_t = prog.value_and_grad(state.flat_z(), output=0)
    _, grad_v = prog.value_and_grad(state.flat_z(), output=1)
    assert np.all(grad_t[:nd] == 0.0)
    assert np.all(grad_v[nd:] == 0.0)


def test_field_gradient_matches_finite_differences(spring_setup):
    spec, params, state = spring_setup
    field = gn.energy_field(params, spec)
    prog = field.traced.program_for(state)
    z = state.flat_z()
    g = field.grad_z(state)
    rng = np.random.default_rng(2)
    for i in rng.choice(len(z), size=8, replace=False):
        h = 1e-6 * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd = (prog(zp)[2] - prog(zm)[2]) / (2 * h)
        assert abs(fd - g[i]) / max(1.0, abs(fd)) < 1e-5


def test_size_transfer_shapes():
    params = gn.init_params(gn.default_hyper("spring"), 0)
    for n in (10, 50):
        spec = sy.spring_spec(n)
        state = sy.sample_initial(spec, 0)
        eb = gn.hamiltonian(params, spec, state)
        assert np.isfinite(eb.H)
        assert len(eb.tau) == n and len(eb.V_edges) == 2 * n


def test_lj_size_transfer_shape():
    params = gn.init_params(gn.default_hyper("binary_lj", dim=3), 0)
    spec = sy.lj_spec(150)  # box rescales with n at constant density
    assert spec.constants["box"] > sy.LJ_BOX
    state = sy.sample_initial(spec, 0)
    eb = gn.hamiltonian(params, spec, state)
    assert np.isfinite(eb.H)


def test_compose_hybrid_validation_and_empty_subgraph():
    spec = sy.spring_spec(3)
    params = gn.init_params(gn.default_hyper("spring"), 0)
    sub_all = SubSystem(kind="spring", particles=(0, 1, 2), edges=spec.edges,
                        kinetic_owned=(0, 1, 2))
    field, constraints = gn.compose_hybrid([(params, sub_all)], spec)
    st = sy.sample_initial(spec, 2)
    plain = gn.energy_field(params, spec)
    assert field.value(st) == plain.value(st)
    assert constraints is None
    # missing kinetic owner
    sub_bad = SubSystem(kind="spring", particles=(0, 1, 2), edges=spec.edges,
                        kinetic_owned=(0, 1))
    with pytest.raises(DomainError):
        gn.compose_hybrid([(params, sub_bad)], spec)


def test_checkpoint_roundtrip_and_errors(tmp_path):
    params = gn.init_params(gn.default_hyper("pendulum"), 11)
    path = tmp_path / "ck.json"
    params.save(path)
    back = gn.ModelParams.load(path)
    for k in params.weights:
        assert np.array_equal(params.weights[k], back.weights[k])
    # truncated file
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        gn.ModelParams.load(path)
    # missing weight
    import json
    doc = json.loads(text)
    removed = sorted(doc["weights"])[0]
    del doc["weights"][removed]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError) as err:
        gn.ModelParams.load(path)
    assert removed in str(err.value)
