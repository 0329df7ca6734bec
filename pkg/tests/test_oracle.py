import itertools

import numpy as np
import pytest

from tempersmc import oracle
from tempersmc.finite import random_finite_model, table_model, two_state_fixture
from tempersmc.oracle import (
    DiscreteMeasure,
    eta_exact,
    flow_map,
    flow_map_via_s,
    future_potential_mass,
    matrix_from_csv,
    matrix_to_csv,
    norm_const_lower_bound_check,
    q_matrix,
    q_semigroup,
    s_kernel_matrix,
    tilted_drift_objects,
    v_norm_distance,
)
from tempersmc.fk_core import DriftSpec

M2 = np.array([[0.9, 0.1], [0.2, 0.8]])
G2 = np.array([1.0, 0.5])


def two_state_model(n=3):
    """Time-homogeneous two-state model with hand-checkable numbers."""
    table = np.tile(np.log(G2), (n, 1))
    return table_model([M2] * n, table, np.array([0.6, 0.4]))


def flat_model(n=4, m=3):
    # dyadic rows keep the unit-potential flow bit-exact
    row = np.array([0.5, 0.25, 0.25][:m])
    row[-1] += 1.0 - row.sum()
    mats = [np.stack([np.roll(row, i) for i in range(m)]) for _ in range(n)]
    return table_model(mats, np.zeros((n, m)), np.roll(row, 1))


# ---------------------------------------------------------------- measures

def test_discrete_measure_validation():
    DiscreteMeasure([0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure([0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([-0.1, 1.1])
    signed = DiscreteMeasure([-0.2, 0.5], signed=True)
    assert signed.signed


# ---------------------------------------------------------------- q matrices

def test_q_matrix_unit_potential_equals_kernel():
    model = flat_model()
    np.testing.assert_allclose(q_matrix(model, 2), model.kernels.matrix(2), atol=0)


def test_q_matrix_hand_values():
    model = two_state_model()
    expected = np.array([[0.9, 0.1], [0.1, 0.4]])
    np.testing.assert_allclose(q_matrix(model, 1), expected, atol=1e-15)


def test_q_matrix_row_sums_equal_potential():
    rng = np.random.default_rng(3)
    model = random_finite_model(rng, m=4, n=6)
    for k in range(1, 7):
        g = np.exp(model.potentials.log_g(k - 1, np.arange(4)))
        np.testing.assert_allclose(q_matrix(model, k).sum(axis=1), g, rtol=1e-14)


def test_q_semigroup_identity_and_single_factor():
    model = two_state_model()
    np.testing.assert_array_equal(q_semigroup(model, 2, 2), np.eye(2))
    np.testing.assert_allclose(q_semigroup(model, 1, 2), q_matrix(model, 2), atol=0)
    with pytest.raises(ValueError):
        q_semigroup(model, 2, 1)


def test_q_semigroup_double_product_brute_force():
    model = two_state_model()
    got = q_semigroup(model, 0, 2)
    q1, q2 = q_matrix(model, 1), q_matrix(model, 2)
    expected = np.zeros((2, 2))
    for x in range(2):
        for y in range(2):
            expected[x, y] = sum(q1[x, z] * q2[z, y] for z in range(2))
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_q_semigroup_law_random_models():
    rng = np.random.default_rng(11)
    for _ in range(10):
        model = random_finite_model(rng, m=4, n=8)
        k, j, l = sorted(rng.integers(0, 9, size=3))
        lhs = q_semigroup(model, k, j) @ q_semigroup(model, j, l)
        np.testing.assert_allclose(lhs, q_semigroup(model, k, l), atol=1e-12)


# ---------------------------------------------------------------- exact flow

def test_eta_exact_step_zero_is_mu():
    model = two_state_model()
    np.testing.assert_array_equal(eta_exact(model, 0).w, model.initial.weights)


def test_eta_exact_unit_potential_is_kernel_propagation():
    model = flat_model(n=3, m=3)
    mu = model.initial.weights
    expected = mu @ model.kernels.matrix(1) @ model.kernels.matrix(2)
    np.testing.assert_allclose(eta_exact(model, 2).w, expected, atol=1e-14)


def test_eta_exact_matches_path_enumeration():
    # brute force: sum over all paths weighted by the running products
    model = two_state_model()
    k = 2
    mu = model.initial.weights
    g = [np.exp(model.potentials.log_g(j, np.arange(2))) for j in range(k)]
    mats = [model.kernels.matrix(j) for j in range(1, k + 1)]
    raw = np.zeros(2)
    for path in itertools.product(range(2), repeat=k + 1):
        weight = mu[path[0]]
        for j in range(k):
            weight *= g[j][path[j]] * mats[j][path[j], path[j + 1]]
        raw[path[-1]] += weight
    np.testing.assert_allclose(eta_exact(model, k).w, raw / raw.sum(), atol=1e-14)


def test_flow_map_identity_and_composition():
    rng = np.random.default_rng(5)
    model = random_finite_model(rng, m=5, n=10)
    eta = DiscreteMeasure(rng.dirichlet(np.ones(5)))
    np.testing.assert_array_equal(flow_map(model, eta, 4, 4).w, eta.w)
    via_j = flow_map(model, flow_map(model, eta, 1, 6), 6, 10)
    np.testing.assert_allclose(via_j.w, flow_map(model, eta, 1, 10).w, atol=1e-12)


def test_flow_consistency():
    rng = np.random.default_rng(6)
    model = random_finite_model(rng, m=4, n=9)
    for k in range(10):
        for l in range(k, 10):
            got = flow_map(model, eta_exact(model, k), k, l)
            np.testing.assert_allclose(got.w, eta_exact(model, l).w, atol=1e-12)


# ---------------------------------------------------------------- S kernels

def test_s_kernel_terminal_and_flat():
    model = two_state_model(n=3)
    np.testing.assert_allclose(s_kernel_matrix(model, 3), M2, atol=1e-14)
    flat = flat_model(n=4, m=3)
    for k in range(1, 5):
        np.testing.assert_allclose(s_kernel_matrix(flat, k), flat.kernels.matrix(k), atol=1e-14)


def test_s_kernel_hand_computation():
    model = two_state_model(n=3)
    k = 1
    # future normalized-weight mass after step k, computed by hand recursion
    gt = G2 / G2.max()
    h3 = np.ones(2)
    h2 = gt * (M2 @ h3)
    h1 = gt * (M2 @ h2)
    expected = M2 * h1[None, :]
    expected /= expected.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(s_kernel_matrix(model, k), expected, atol=1e-14)
    np.testing.assert_allclose(future_potential_mass(model, k), h1, atol=1e-14)


def test_s_kernel_rows_sum_to_one():
    rng = np.random.default_rng(8)
    model = random_finite_model(rng, m=5, n=7)
    for k in range(1, 8):
        np.testing.assert_allclose(s_kernel_matrix(model, k).sum(axis=1), 1.0, atol=1e-12)


def test_flow_via_s_trivial_cases():
    model = two_state_model(n=3)
    eta = DiscreteMeasure([0.3, 0.7])
    np.testing.assert_allclose(flow_map_via_s(model, eta, 3).w, eta.w, atol=1e-15)
    flat = flat_model(n=3, m=3)
    eta3 = DiscreteMeasure([0.2, 0.5, 0.3])
    expected = flow_map(flat, eta3, 0, 3)
    np.testing.assert_allclose(flow_map_via_s(flat, eta3, 0).w, expected.w, atol=1e-12)


def test_dual_route_identity_random_models():
    rng = np.random.default_rng(13)
    for _ in range(100):
        model = random_finite_model(rng, m=5, n=6)
        eta = DiscreteMeasure(rng.dirichlet(np.ones(5)))
        k = int(rng.integers(0, 7))
        a = flow_map_via_s(model, eta, k).w
        b = flow_map(model, eta, k, 6).w
        np.testing.assert_allclose(a, b, atol=1e-10)


# ---------------------------------------------------------------- tilted drift

def _flat_drift_inputs(model):
    m = model.n_states
    v = np.ones(m)
    eps = m * min(float(model.kernels.matrix(k).min()) for k in range(1, model.horizon + 1))
    nu = np.full(m, 1.0 / m)
    drift = DriftSpec(v=v, lam=0.5, level_d=1.0, b_d=1.0)
    return drift, (eps, nu)


def test_tilted_drift_flat_model():
    model = flat_model(n=4, m=3)
    drift, minor = _flat_drift_inputs(model)
    td = tilted_drift_objects(model, 2, drift, minor)
    assert td.a2_ok
    np.testing.assert_allclose(td.v_nk, 1.0, atol=1e-14)
    np.testing.assert_allclose(td.v_prev, 1.0, atol=1e-14)
    assert td.passed


def test_tilted_drift_hand_computation():
    model = two_state_model(n=3)
    v = np.array([1.0, 1.5])
    lam = 0.9
    mv = M2 @ v
    b = float(np.max(mv - lam * v)) * 1.01
    eps = 2 * float(M2.min()) * 0.999
    nu = np.array([0.5, 0.5])
    drift = DriftSpec(v=v, lam=lam, level_d=float(v.max()), b_d=b)
    td = tilted_drift_objects(model, 2, drift, (eps, nu))
    assert td.a2_ok
    # independent recomputation of the tilt coefficient: backward recursion
    # from the terminal step (n = 3), stopping at step 2
    gt = G2 / G2.max()
    h3 = np.ones(2)
    h2 = gt * (M2 @ h3)
    assert td.eps_nk == pytest.approx(eps * float(nu @ h2), rel=1e-13)
    assert td.b_nk_proof == pytest.approx(b / td.eps_nk, rel=1e-13)
    expected_nu = nu * h2 / (nu @ h2)
    np.testing.assert_allclose(td.nu_nk.w, expected_nu, atol=1e-14)
    assert td.passed


def test_tilted_drift_terminal_v_is_v():
    model = two_state_model(n=3)
    _, minor = _flat_drift_inputs(model)
    drift = DriftSpec(v=np.array([1.0, 2.0]), lam=0.9, level_d=2.0, b_d=3.0)
    td = tilted_drift_objects(model, 3, drift, minor)
    np.testing.assert_array_equal(td.v_nk, np.array([1.0, 2.0]))


def test_tilted_drift_reports_broken_inputs():
    model = two_state_model(n=3)
    v = np.array([1.0, 1.5])
    # lam declared far too small for these matrices
    drift = DriftSpec(v=v, lam=0.01, level_d=1.0, b_d=1e-6)
    td = tilted_drift_objects(model, 1, drift, (0.9, np.array([0.5, 0.5])))
    assert not td.a2_ok
    assert td.a2_failures


# ---------------------------------------------------------------- v-norm

def test_v_norm_basic():
    a = DiscreteMeasure([0.2, 0.8])
    b = DiscreteMeasure([0.5, 0.5])
    assert v_norm_distance(a, a, np.ones(2)) == 0.0
    assert v_norm_distance(a, b, np.ones(2)) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        v_norm_distance(a, b, np.ones(2), alpha=0.0)
    with pytest.raises(ValueError):
        v_norm_distance(a, b, np.array([0.5, 1.0]))


def test_v_norm_matches_sign_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(20):
        a = rng.dirichlet(np.ones(5))
        b = rng.dirichlet(np.ones(5))
        v = 1.0 + rng.random(5) * 3.0
        alpha = float(rng.uniform(0.1, 1.0))
        # brute force over all sign patterns of phi = +/- v^alpha
        best = max(
            abs(np.sum((a - b) * np.array(signs) * v**alpha))
            for signs in itertools.product([-1.0, 1.0], repeat=5)
        )
        assert v_norm_distance(a, b, v, alpha) == pytest.approx(best, rel=1e-12)


def test_v_norm_metric_axioms():
    rng = np.random.default_rng(22)
    v = 1.0 + rng.random(4)
    for _ in range(50):
        a, b, c = (rng.dirichlet(np.ones(4)) for _ in range(3))
        dab = v_norm_distance(a, b, v, 0.7)
        assert dab == pytest.approx(v_norm_distance(b, a, v, 0.7))
        assert dab <= v_norm_distance(a, c, v, 0.7) + v_norm_distance(c, b, v, 0.7) + 1e-15


# ---------------------------------------------------------------- lemma-3 bound

def test_norm_const_unit_potential():
    model = flat_model(n=3, m=3)
    drift = DriftSpec(v=np.ones(3), lam=0.5, level_d=1.0, b_d=1.0)
    rep = norm_const_lower_bound_check(model, drift, model.initial.weights)
    assert rep.ok
    np.testing.assert_allclose(rep.per_k, 1.0, atol=1e-14)


def test_norm_const_terminal_mass_is_one():
    model = two_state_fixture(6)
    np.testing.assert_array_equal(future_potential_mass(model, 6), np.ones(2))


def test_norm_const_fixture_grid():
    from tempersmc.finite import fixture_drift_inputs

    drift, _ = fixture_drift_inputs()
    for n in range(1, 21):
        model = two_state_fixture(n)
        rep = norm_const_lower_bound_check(model, drift, model.initial.weights)
        assert rep.a1_ok and rep.drift_ok
        assert rep.min_mass >= rep.bound


# ---------------------------------------------------------------- serialization

def test_matrix_csv_round_trip():
    rng = np.random.default_rng(31)
    a = rng.standard_normal((4, 3)) * 10.0**rng.integers(-8, 8, size=(4, 3))
    again = matrix_from_csv(matrix_to_csv(a))
    np.testing.assert_array_equal(a, again)


def test_matrix_csv_golden_two_state():
    model = two_state_model()
    text = matrix_to_csv(q_matrix(model, 1))
    with open(__file__.replace("test_oracle.py", "data/q_two_state.csv")) as fh:
        assert text == fh.read()
