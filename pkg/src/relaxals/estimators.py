"""scikit-learn style front ends for relaxed alternating least squares."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array, check_random_state
from sklearn.utils.validation import check_is_fitted

from .factor import FactorPair, RelaxConfig, product, run
from .objectives import (CompletionData, CompletionObjective, LyapunovData,
                         LyapunovObjective)


def _relax_config(est):
    auto = isinstance(est.omega, str)
    if auto and est.omega != "auto":
        raise ValueError("omega must be a float in (0, 2) or 'auto'")
    return RelaxConfig(omega=1.0 if auto else float(est.omega),
                       activation_iter=est.activation_iter, max_iters=est.max_iter,
                       tol=est.tol, mode="auto_omega" if auto else "fixed_omega")


class _RelaxedALSBase(BaseEstimator):
    def _check_rank(self, m, n):
        if not isinstance(self.rank, (int, np.integer)) or not 1 <= self.rank <= min(m, n):
            raise ValueError(f"rank must be an integer in [1, {min(m, n)}], got {self.rank!r}")

    def _start(self, m, n):
        rng = check_random_state(self.random_state)
        return FactorPair(rng.standard_normal((m, self.rank)), rng.standard_normal((n, self.rank)))

    def _store(self, pair, trace):
        self.U_, self.V_ = pair.U, pair.V
        self.trace_ = trace
        self.n_iter_ = len(trace) - 1
        self.converged_ = trace.converged
        self.omega_ = trace.entries[-1].omega_used
        return self


class MatrixCompletion(TransformerMixin, _RelaxedALSBase):
    """Rank-constrained matrix completion by relaxed alternating least squares.

    Parameters
    ----------
    rank : int
        Target rank of the factorization ``U V^T``.
    omega : float or "auto"
        Relaxation weight in (0, 2), or ``"auto"`` to estimate the optimal
        weight from the residual trace once ``activation_iter`` is reached.
    activation_iter : int
        Iteration at which the relaxation is switched on.
    max_iter : int
    tol : float
        Stop when the relative error on the observed entries drops below this.
    random_state : int, RandomState or None
        Seeds the random starting factors.

    Attributes
    ----------
    U_, V_ : ndarray
        Fitted factors.
    trace_ : ResidualTrace
    n_iter_ : int
    converged_ : bool
    omega_ : float
        Relaxation weight used in the last sweep.
    """

    def __init__(self, rank=2, omega="auto", activation_iter=12, max_iter=500,
                 tol=1e-10, random_state=None):
        self.rank = rank
        self.omega = omega
        self.activation_iter = activation_iter
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit factors to the finite entries of ``X``; NaN marks a missing entry."""
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float)
        m, n = X.shape
        self._check_rank(m, n)
        rows, cols = np.nonzero(~np.isnan(X))
        if rows.size == 0:
            raise ValueError("X has no observed entries")
        self.n_features_in_ = n
        data = CompletionData(m, n, rows, cols, X[rows, cols])
        pair, trace = run(CompletionObjective(data), self._start(m, n), _relax_config(self))
        return self._store(pair, trace)

    def predict(self, X=None):
        """Completed matrix ``U_ V_^T``."""
        check_is_fitted(self, "U_")
        return product(FactorPair(self.U_, self.V_))

    def transform(self, X):
        """Fill the missing entries of ``X`` from the fitted low-rank model."""
        check_is_fitted(self, "U_")
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float, copy=True)
        full = self.predict()
        if X.shape != full.shape:
            raise ValueError(f"X has shape {X.shape}, expected {full.shape}")
        missing = np.isnan(X)
        X[missing] = full[missing]
        return X


class LowRankLyapunov(_RelaxedALSBase):
    """Rank-``k`` solution of ``A X + X A^T = B`` for symmetric positive definite ``A``.

    Minimizes the energy ``1/2 <X, A X + X A> - <B, X>`` over ``X = U V^T``
    by relaxed alternating least squares; ``proj_err`` is the stopping metric.
    Parameters and fitted attributes follow :class:`MatrixCompletion`.
    """

    def __init__(self, rank=2, omega="auto", activation_iter=50, max_iter=20000,
                 tol=1e-8, random_state=None):
        self.rank = rank
        self.omega = omega
        self.activation_iter = activation_iter
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, A, B):
        A = check_array(A, dtype=float)
        B = check_array(B, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape != (n, n):
            raise ValueError("A and B must be square of the same size")
        self._check_rank(n, n)
        obj = LyapunovObjective(LyapunovData(A, B))
        pair, trace = run(obj, self._start(n, n), _relax_config(self))
        return self._store(pair, trace)

    def predict(self, X=None):
        """Low-rank solution ``U_ V_^T``."""
        check_is_fitted(self, "U_")
        return product(FactorPair(self.U_, self.V_))
