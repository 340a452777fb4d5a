import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relaxals import LowRankLyapunov, MatrixCompletion
from relaxals.objectives import tridiag_laplacian


@pytest.fixture
def masked(rng):
    A = rng.standard_normal((40, 3)) @ rng.standard_normal((30, 3)).T
    X = A.copy()
    X[rng.random(A.shape) < 0.5] = np.nan
    return A, X


def test_params_roundtrip():
    est = MatrixCompletion(rank=3, omega=1.3)
    assert est.get_params()["omega"] == 1.3
    est.set_params(rank=4)
    assert clone(est).rank == 4


def test_completion_fit_predict_transform(masked):
    A, X = masked
    est = MatrixCompletion(rank=3, random_state=0, activation_iter=8).fit(X)
    assert est.converged_ and est.n_iter_ == len(est.trace_) - 1
    assert np.linalg.norm(est.predict() - A) <= 1e-6 * np.linalg.norm(A)
    filled = est.transform(X)
    observed = ~np.isnan(X)
    np.testing.assert_array_equal(filled[observed], X[observed])
    assert not np.isnan(filled).any()
    np.testing.assert_allclose(MatrixCompletion(rank=3, random_state=0).fit_transform(X),
                               filled, atol=1e-6 * np.abs(A).max())
    assert 1.0 <= est.omega_ < 2.0


def test_completion_fixed_omega_and_determinism(masked):
    _, X = masked
    a = MatrixCompletion(rank=3, omega=1.2, random_state=1).fit(X)
    b = MatrixCompletion(rank=3, omega=1.2, random_state=1).fit(X)
    np.testing.assert_array_equal(a.U_, b.U_)
    assert a.omega_ == 1.2


def test_completion_validation(masked):
    _, X = masked
    with pytest.raises(NotFittedError):
        MatrixCompletion().predict()
    with pytest.raises(ValueError):
        MatrixCompletion(rank=0).fit(X)
    with pytest.raises(ValueError):
        MatrixCompletion(rank=3, omega="fast").fit(X)
    with pytest.raises(ValueError):
        MatrixCompletion().fit(np.full((3, 3), np.nan))
    est = MatrixCompletion(rank=3, random_state=0).fit(X)
    with pytest.raises(ValueError):
        est.transform(X[:5])


def test_lyapunov_estimator(rng):
    n = 32
    A = tridiag_laplacian(n)
    Xs = rng.standard_normal((n, 2)) @ rng.standard_normal((n, 2)).T
    est = LowRankLyapunov(rank=2, random_state=0, tol=1e-10).fit(A, A @ Xs + Xs @ A)
    assert est.converged_
    assert np.linalg.norm(est.predict() - Xs) <= 1e-7 * np.linalg.norm(Xs)
    with pytest.raises(ValueError):
        LowRankLyapunov().fit(A, np.ones((3, 3)))
