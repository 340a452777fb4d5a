import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaxals.exceptions import NonFinite, RankCollapse, SingularGauge
from relaxals.factor import (FactorPair, RelaxConfig, product, qr_thin, relaxed_sweep,
                             reparametrize, run)
from relaxals.objectives import CompletionData, CompletionObjective
from relaxals.oracle import analyze, dense_quadratic_instance, find_critical_point
from relaxals.shift import ShiftController

from conftest import random_pair, rel, well_conditioned


def full_completion(A):
    m, n = A.shape
    idx = np.array([(i, j) for i in range(m) for j in range(n)])
    return CompletionObjective(CompletionData.from_matrix(A, idx))


# product --------------------------------------------------------------------


def test_product_identity():
    I = np.eye(3)
    np.testing.assert_array_equal(product(FactorPair(I, I)), I)


def test_product_rank_one_by_hand():
    pair = FactorPair(np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))
    np.testing.assert_array_equal(product(pair), [[3, 4], [6, 8]])


def test_product_matches_triple_loop(rng):
    pair = random_pair(rng, 5, 4, 2)
    X = np.zeros((5, 4))
    for i in range(5):
        for j in range(4):
            for r in range(2):
                X[i, j] += pair.U[i, r] * pair.V[j, r]
    np.testing.assert_allclose(product(pair), X, rtol=0, atol=1e-14)


def test_factor_pair_validation():
    with pytest.raises(ValueError):
        FactorPair(np.ones((2, 3)), np.ones((5, 3)))
    with pytest.raises(ValueError):
        FactorPair(np.ones((4, 2)), np.ones((5, 3)))
    with pytest.raises(RankCollapse):
        FactorPair(np.ones((4, 2)), np.ones((5, 2))).check_full_rank()


# reparametrize --------------------------------------------------------------


def test_reparametrize_identity(rng):
    pair = random_pair(rng, 5, 4, 2)
    out = reparametrize(pair, np.eye(2))
    np.testing.assert_allclose(out.U, pair.U)
    np.testing.assert_allclose(out.V, pair.V)


def test_reparametrize_scalar(rng):
    pair = random_pair(rng, 5, 4, 2)
    out = reparametrize(pair, 3.0 * np.eye(2))
    np.testing.assert_allclose(out.U, 3.0 * pair.U)
    np.testing.assert_allclose(out.V, pair.V / 3.0)
    assert rel(product(out), product(pair)) < 1e-14


def test_reparametrize_random_preserves_product(rng):
    pair = random_pair(rng, 6, 5, 3)
    A = rng.standard_normal((3, 3))
    assert rel(product(reparametrize(pair, A)), product(pair)) <= 1e-10


def test_reparametrize_singular(rng):
    with pytest.raises(SingularGauge):
        reparametrize(random_pair(rng, 4, 4, 2), np.array([[1.0, 2.0], [2.0, 4.0]]))


# qr_thin ---------------------------------------------------------------------


def test_qr_identity():
    Q, R = qr_thin(np.eye(3))
    np.testing.assert_allclose(Q, np.eye(3))
    np.testing.assert_allclose(R, np.eye(3))


def test_qr_hand_gram_schmidt():
    Q, R = qr_thin(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(Q, [[0.6], [0.8]])
    np.testing.assert_allclose(R, [[5.0]])


def test_qr_random_identities(rng):
    M = rng.standard_normal((6, 3))
    Q, R = qr_thin(M)
    assert np.linalg.norm(Q.T @ Q - np.eye(3)) <= 1e-12
    assert np.linalg.norm(Q @ R - M) <= 1e-12 * np.linalg.norm(M)
    assert np.all(np.diag(R) >= 0)
    np.testing.assert_array_equal(np.triu(R), R)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 10_000))
def test_qr_sign_convention_is_deterministic(k, extra, seed):
    M = np.random.default_rng(seed).standard_normal((k + extra, k))
    Q1, R1 = qr_thin(M)
    Q2, R2 = qr_thin(M * 1.0)
    np.testing.assert_array_equal(Q1, Q2)
    assert np.all(np.diag(R1) >= 0)


# relaxed_sweep ----------------------------------------------------------------


@pytest.mark.parametrize("omega", [0.5, 1.0, 1.5, 1.9])
def test_sweep_fixed_point(omega):
    obj, pair0 = dense_quadratic_instance(5, 4, 2, seed=3)
    pair, _ = find_critical_point(obj, pair0)
    X = product(pair)
    assert rel(product(relaxed_sweep(pair, obj, omega)), X) <= 1e-10


def test_sweep_exact_in_one_step_for_full_observation(rng):
    Us, Vs = rng.standard_normal((7, 2)), rng.standard_normal((6, 2))
    A = Us @ Vs.T
    obj = full_completion(A)
    out = relaxed_sweep(FactorPair(rng.standard_normal((7, 2)), Vs), obj, 1.0)
    assert rel(product(out), A) <= 1e-10


@pytest.mark.parametrize("omega", [0.7, 1.0, 1.6])
def test_sweep_gauge_equivariance(rng, omega):
    obj, pair = dense_quadratic_instance(6, 5, 3, seed=11)
    A = well_conditioned(rng, 3, cond=10.0)
    a = product(relaxed_sweep(reparametrize(pair, A), obj, omega))
    b = product(relaxed_sweep(pair, obj, omega))
    assert rel(a, b) <= 1e-9


def test_sweep_omega_one_is_plain_alternation(rng):
    obj, pair = dense_quadratic_instance(6, 5, 2, seed=4)
    U = obj.solve_U(pair.V)
    V = obj.solve_V(U)
    assert rel(product(relaxed_sweep(pair, obj, 1.0)), U @ V.T) <= 1e-12


@pytest.mark.parametrize("omega", [0.8, 1.3])
def test_qr_is_pure_gauge(omega):
    obj, pair = dense_quadratic_instance(5, 5, 2, seed=8)
    a, b = pair.copy(), pair.copy()
    for _ in range(15):
        a = relaxed_sweep(a, obj, omega)
        b = relaxed_sweep(b, obj, omega, orthogonalize=False)
        assert rel(product(b), product(a)) <= 1e-8


def test_sweep_rejects_rank_collapse():
    A = np.ones((4, 4))
    obj = full_completion(A)
    pair = FactorPair(np.ones((4, 2)), np.ones((4, 2)))
    with pytest.raises(Exception):
        relaxed_sweep(pair, obj, 1.0)


# run -------------------------------------------------------------------------


def test_run_stops_immediately_when_tol_met(rng):
    Us, Vs = rng.standard_normal((5, 2)), rng.standard_normal((4, 2))
    obj = full_completion(Us @ Vs.T)
    pair, trace = run(obj, FactorPair(Us, Vs), RelaxConfig(tol=1e-8))
    assert len(trace) == 1 and trace.converged
    np.testing.assert_array_equal(pair.U, Us)


def test_run_rate_matches_gauss_seidel_radius():
    obj, pair0 = dense_quadratic_instance(6, 5, 2, seed=1, cond=1e4, noise=0.3)
    pair, _ = find_critical_point(obj, pair0)
    rho1 = analyze(obj, pair).rho1
    Xs = product(pair)
    rng = np.random.default_rng(2)
    start = FactorPair(pair.U + 1e-3 * rng.standard_normal(pair.U.shape),
                       pair.V + 1e-3 * rng.standard_normal(pair.V.shape))
    dist = []
    _, trace = run(obj, start, RelaxConfig(max_iters=400, tol=1e-300),
                   callback=lambda ell, p: dist.append(np.linalg.norm(product(p) - Xs)))
    errs = np.array(trace.errors)
    assert np.all(np.diff(errs[:100]) < 0)
    d = np.array(dist)
    sel = np.flatnonzero(d > 1e-10 * np.linalg.norm(Xs))[-30:]
    slope = np.polyfit(sel, np.log(d[sel]), 1)[0]
    assert abs(np.exp(slope) - rho1) <= 0.05 * rho1


def test_run_auto_trace_contract():
    obj, pair0 = dense_quadratic_instance(6, 5, 2, seed=1, cond=1e3)
    cfg = RelaxConfig(activation_iter=10, max_iters=60, tol=1e-300, mode="auto_omega")
    _, trace = run(obj, pair0, cfg)
    omegas = trace.omegas
    assert all(w == 1.0 for w in omegas[:10])
    assert len(set(omegas[10:])) == 1 and 1.0 < omegas[10] < 2.0


def test_run_non_finite_error():
    class Broken(type(dense_quadratic_instance(3, 3, 1, seed=0)[0])):
        def error(self, pair):
            return float("nan")
    obj, pair0 = dense_quadratic_instance(3, 3, 1, seed=0)
    obj.__class__ = Broken
    with pytest.raises(NonFinite):
        run(obj, pair0, RelaxConfig())


def test_gauge_invariance_of_runs(rng):
    obj, pair0 = dense_quadratic_instance(7, 6, 3, seed=5)
    A = well_conditioned(rng, 3, cond=100.0)
    cfg = RelaxConfig(omega=1.4, max_iters=20, tol=1e-300)
    a, b = [], []
    run(obj, pair0, cfg, callback=lambda ell, p: a.append(product(p)))
    run(obj, reparametrize(pair0, A), cfg, callback=lambda ell, p: b.append(product(p)))
    assert len(a) == 21
    for x, y in zip(a, b):
        assert rel(y, x) <= 1e-8


def test_relax_config_validation():
    for bad in (dict(omega=0.0), dict(omega=2.0), dict(max_iters=0), dict(tol=0.0),
                dict(activation_iter=-1), dict(mode="nope")):
        with pytest.raises(ValueError):
            RelaxConfig(**bad)
    assert isinstance(RelaxConfig(mode="auto_omega").controller(), ShiftController)
