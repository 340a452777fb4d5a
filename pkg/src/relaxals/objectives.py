"""Strongly convex objectives ``f`` with exact block minimizers of ``f(U V^T)``.

Every objective exposes the same surface: ``value``, ``gradient`` and
``hessian_apply`` of ``f`` on the full matrix space, the block minimizers
``solve_U`` / ``solve_V`` and the stopping metric ``error(pair)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import (FrameNotOrthonormal, IllConditionedShift, RankCollapse,
                         SubproblemSingular, TooManySamples, ZeroData,
                         ZeroProjectedB)
from .factor import DEFAULT_RANK_TOL, product, qr_thin


class Objective(ABC):
    """Smooth strongly convex ``f`` on m x n matrices, used through ``F(U, V) = f(U V^T)``."""

    rank_tol = DEFAULT_RANK_TOL

    @property
    @abstractmethod
    def shape(self):
        """``(m, n)``."""

    @abstractmethod
    def value(self, X):
        pass

    @abstractmethod
    def gradient(self, X):
        pass

    @abstractmethod
    def hessian_apply(self, X, Z):
        """``nabla^2 f(X)[Z]`` as an m x n matrix."""

    @abstractmethod
    def solve_U(self, V):
        """Exact minimizer of ``U -> f(U V^T)``."""

    @abstractmethod
    def solve_V(self, U):
        """Exact minimizer of ``V -> f(U V^T)``."""

    @abstractmethod
    def error(self, pair):
        pass

    def full_gradient(self, X):
        return self.gradient(X)

    def F(self, pair):
        return self.value(product(pair))

    def factor_gradient(self, pair):
        """``(nabla_U F, nabla_V F) = (G V, G^T U)`` with ``G = nabla f(U V^T)``."""
        G = self.gradient(product(pair))
        return G @ pair.V, G.T @ pair.U


# ---------------------------------------------------------------------------
# helpers


def _check_spd_batch(G, rank_tol, label):
    """Raise SubproblemSingular naming the first ill-conditioned k x k block."""
    w = np.linalg.eigvalsh(G)
    bad = ~(w[:, 0] > rank_tol * w[:, -1])
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SubproblemSingular(f"normal matrix of {label} {i} is singular", index=i)


def _grouped_lstsq(keys, F, values, n_groups, rank_tol, label):
    """Row ``g`` of the result solves ``min_x sum_{o: keys[o]=g} (values[o] - F[o] x)^2``."""
    k = F.shape[1]
    G = np.empty((n_groups, k, k))
    rhs = np.empty((n_groups, k))
    for a in range(k):
        rhs[:, a] = np.bincount(keys, weights=F[:, a] * values, minlength=n_groups)
        for b in range(a, k):
            G[:, a, b] = np.bincount(keys, weights=F[:, a] * F[:, b], minlength=n_groups)
            G[:, b, a] = G[:, a, b]
    _check_spd_batch(G, rank_tol, label)
    return np.linalg.solve(G, rhs[:, :, None])[:, :, 0]


def tangent_project(U, V, Z, rank_tol=DEFAULT_RANK_TOL):
    """Orthogonal projection of ``Z`` onto the tangent space of the rank-k manifold at ``U V^T``.

    Computes ``P_U Z + Z P_V - P_U Z P_V`` with projectors built from thin QR
    factors of ``U`` and ``V``.
    """
    Qu, Pu_Z, Z_Pv, Qv = _tangent_parts(U, V, Z, rank_tol)
    return Qu @ Pu_Z + Z_Pv @ Qv.T - Qu @ (Pu_Z @ Qv) @ Qv.T


def _tangent_parts(U, V, Z, rank_tol):
    Qu, Ru = qr_thin(U)
    Qv, Rv = qr_thin(V)
    for R, name in ((Ru, "U"), (Rv, "V")):
        d = np.abs(np.diag(R))
        if not np.min(d) > rank_tol * np.max(d):
            raise RankCollapse(f"{name} is rank deficient")
    return Qu, Qu.T @ Z, Z @ Qv, Qv


def _tangent_norm(U, V, Z, rank_tol):
    Qu, QuZ, ZQv, Qv = _tangent_parts(U, V, Z, rank_tol)
    core = QuZ @ Qv
    sq = np.sum(QuZ**2) + np.sum(ZQv**2) - np.sum(core**2)
    return float(np.sqrt(max(sq, 0.0)))


def projected_gradient_error(obj, pair, linear):
    """``||P_X grad f(X)||_F / ||P_X(linear)||_F`` at ``X = U V^T``."""
    X = product(pair)
    den = _tangent_norm(pair.U, pair.V, linear, obj.rank_tol)
    if den == 0.0:
        raise ZeroProjectedB("projection of the right-hand side vanishes")
    return _tangent_norm(pair.U, pair.V, obj.gradient(X), obj.rank_tol) / den


def _is_orthonormal(V, tol):
    k = V.shape[1]
    return np.linalg.norm(V.T @ V - np.eye(k)) <= tol


# ---------------------------------------------------------------------------
# matrix completion


@dataclass
class CompletionData:
    """Observed entries ``A[i, j]`` for ``(i, j)`` in the sampling set."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    _by_row: np.ndarray = field(init=False, repr=False)
    _by_col: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.intp).ravel()
        self.cols = np.asarray(self.cols, dtype=np.intp).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not (self.rows.size == self.cols.size == self.values.size):
            raise ValueError("rows, cols and values must have equal length")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.n_rows
                               or self.cols.min() < 0 or self.cols.max() >= self.n_cols):
            raise ValueError("index out of range")
        flat = self.rows * self.n_cols + self.cols
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate index pairs")
        # entries sorted by (row, col) and by (col, row)
        self._by_row = np.lexsort((self.cols, self.rows))
        self._by_col = np.lexsort((self.rows, self.cols))

    @classmethod
    def from_matrix(cls, A, omega):
        """Observations of dense ``A`` at the index pairs ``omega`` (count x 2)."""
        A = np.asarray(A, dtype=float)
        omega = np.asarray(omega, dtype=np.intp).reshape(-1, 2)
        return cls(A.shape[0], A.shape[1], omega[:, 0], omega[:, 1],
                   A[omega[:, 0], omega[:, 1]])

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    def __len__(self):
        return self.values.size

    def to_dense(self, fill=0.0):
        M = np.full(self.shape, fill, dtype=float)
        M[self.rows, self.cols] = self.values
        return M

    def mask(self):
        M = np.zeros(self.shape, dtype=bool)
        M[self.rows, self.cols] = True
        return M

    def to_text(self):
        """Coordinate text format: header ``m n count``, then ``i j value`` lines."""
        lines = [f"{self.n_rows} {self.n_cols} {len(self)}"]
        order = self._by_row
        lines += [f"{i} {j} {v!r}" for i, j, v in
                  zip(self.rows[order].tolist(), self.cols[order].tolist(),
                      self.values[order].tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        tokens = text.split("\n")
        m, n, count = (int(t) for t in tokens[0].split())
        body = [t.split() for t in tokens[1:] if t.strip()]
        if len(body) != count:
            raise ValueError(f"header announces {count} entries, found {len(body)}")
        rows = np.array([int(b[0]) for b in body], dtype=np.intp)
        cols = np.array([int(b[1]) for b in body], dtype=np.intp)
        vals = np.array([float(b[2]) for b in body])
        return cls(m, n, rows, cols, vals)


def sample_omega(n, k, OS, seed=None, m=None):
    """Draw ``round(OS (2 n k - k^2))`` distinct index pairs uniformly.

    Returns a ``(count, 2)`` integer array sorted lexicographically.  ``m``
    defaults to ``n`` (square case).
    """
    m = n if m is None else m
    if OS < 1:
        raise ValueError("oversampling factor must be >= 1")
    count = int(round(OS * (2 * n * k - k * k)))
    if count > m * n:
        raise TooManySamples(f"{count} samples requested from {m * n} entries")
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(m * n, size=count, replace=False))
    return np.stack([flat // n, flat % n], axis=1)


def completion_solve_U(V, data, rank_tol=DEFAULT_RANK_TOL):
    """Row-wise least squares fit of the observed entries for fixed ``V``."""
    V = np.asarray(V, dtype=float)
    o = data._by_row
    return _grouped_lstsq(data.rows[o], V[data.cols[o]], data.values[o],
                          data.n_rows, rank_tol, "row")


def completion_solve_V(U, data, rank_tol=DEFAULT_RANK_TOL):
    U = np.asarray(U, dtype=float)
    o = data._by_col
    return _grouped_lstsq(data.cols[o], U[data.rows[o]], data.values[o],
                          data.n_cols, rank_tol, "column")


def completion_error(pair, data):
    """``||P(A - U V^T)||_F / ||P(A)||_F`` over the observed entries."""
    den = np.linalg.norm(data.values)
    if den == 0.0:
        raise ZeroData("observed entries are all zero")
    pred = np.einsum("ij,ij->i", pair.U[data.rows], pair.V[data.cols])
    return float(np.linalg.norm(data.values - pred) / den)


class CompletionObjective(Objective):
    """``f(X) = 1/2 ||P(A - X)||_F^2`` over the sampled entries."""

    def __init__(self, data, rank_tol=DEFAULT_RANK_TOL):
        self.data = data
        self.rank_tol = rank_tol

    @property
    def shape(self):
        return self.data.shape

    def _residual(self, X):
        d = self.data
        return np.asarray(X)[d.rows, d.cols] - d.values

    def value(self, X):
        return 0.5 * float(np.sum(self._residual(X) ** 2))

    def gradient(self, X):
        G = np.zeros(self.shape)
        G[self.data.rows, self.data.cols] = self._residual(X)
        return G

    def hessian_apply(self, X, Z):
        d = self.data
        out = np.zeros(self.shape)
        out[d.rows, d.cols] = np.asarray(Z)[d.rows, d.cols]
        return out

    def solve_U(self, V):
        return completion_solve_U(V, self.data, self.rank_tol)

    def solve_V(self, U):
        return completion_solve_V(U, self.data, self.rank_tol)

    def error(self, pair):
        return completion_error(pair, self.data)


# ---------------------------------------------------------------------------
# Lyapunov equation


def tridiag_laplacian(n):
    """``(n + 1)^2 tridiag(-1, 2, -1)`` of size n x n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    T = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return (n + 1) ** 2 * T


@dataclass
class LyapunovData:
    """Coefficients of ``A X + X A^T = B`` with ``A`` symmetric positive definite."""

    A: np.ndarray
    B: np.ndarray
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, n):
            raise ValueError("A and B must be square of equal size")
        if np.linalg.norm(self.A - self.A.T) > 1e-12 * np.linalg.norm(self.A):
            raise ValueError("A must be symmetric")
        self.eigvals, self.eigvecs = np.linalg.eigh(self.A)
        if not self.eigvals[0] > 0:
            raise ValueError("A must be positive definite")

    @property
    def n(self):
        return self.A.shape[0]


def sylvester_small(A, M, C, A_eigh=None):
    """Solve ``A U + U M = C`` for SPD ``A`` (n x n) and symmetric ``M`` (k x k).

    Diagonalizes ``M = W diag(lam) W^T`` and solves the shifted systems
    ``(A + lam_i I) u_i = (C W)_i``.  ``A_eigh`` may carry a precomputed
    eigendecomposition ``(evals, evecs)`` of ``A``; otherwise Cholesky
    factorizations are used.
    """
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    C = np.asarray(C, dtype=float)
    lam, W = np.linalg.eigh(0.5 * (M + M.T))
    Ct = C @ W
    Ut = np.empty_like(Ct)
    if A_eigh is not None:
        evals, evecs = A_eigh
        shifted = evals[:, None] + lam[None, :]
        scale = np.max(np.abs(shifted))
        if not np.min(shifted) > 1e-14 * scale:
            raise IllConditionedShift("A + lambda I is nearly singular")
        Ut = evecs @ ((evecs.T @ Ct) / shifted)
    else:
        n = A.shape[0]
        for i, li in enumerate(lam):
            try:
                cf = sla.cho_factor(A + li * np.eye(n))
            except np.linalg.LinAlgError:
                raise IllConditionedShift(
                    f"A + {li:g} I is not positive definite") from None
            d = np.abs(np.diag(cf[0]))
            if not np.min(d) ** 2 > 1e-14 * np.max(d) ** 2:
                raise IllConditionedShift(f"A + {li:g} I is nearly singular")
            Ut[:, i] = sla.cho_solve(cf, Ct[:, i])
    return Ut @ W.T


def lyapunov_solve_U(V, data, ortho_tol=1e-10):
    """Block minimizer for an orthonormal frame ``V``: solves ``A U + U (V^T A V) = B V``."""
    V = np.asarray(V, dtype=float)
    if not _is_orthonormal(V, ortho_tol):
        raise FrameNotOrthonormal("V must have orthonormal columns")
    return sylvester_small(data.A, V.T @ data.A @ V, data.B @ V,
                           A_eigh=(data.eigvals, data.eigvecs))


def lyapunov_solve_V(U, data, ortho_tol=1e-10):
    U = np.asarray(U, dtype=float)
    if not _is_orthonormal(U, ortho_tol):
        raise FrameNotOrthonormal("U must have orthonormal columns")
    return sylvester_small(data.A, U.T @ data.A @ U, data.B.T @ U,
                           A_eigh=(data.eigvals, data.eigvecs))


def lyapunov_proj_err(pair, data, rank_tol=DEFAULT_RANK_TOL):
    """``||P_X(A X + X A^T - B)||_F / ||P_X(B)||_F`` at ``X = U V^T``."""
    X = product(pair)
    den = _tangent_norm(pair.U, pair.V, data.B, rank_tol)
    if den == 0.0:
        raise ZeroProjectedB("projection of B vanishes")
    R = data.A @ X + X @ data.A.T - data.B
    return _tangent_norm(pair.U, pair.V, R, rank_tol) / den


def _via_frame(solve, W, data):
    """Apply an orthonormal-frame solver to a general full-rank frame ``W``.

    With ``W = Q R`` the block minimizer transforms as ``S(W) = S(Q) R^{-T}``.
    """
    if _is_orthonormal(W, 1e-10):
        return solve(W, data)
    Q, R = qr_thin(W)
    d = np.abs(np.diag(R))
    if not np.min(d) > DEFAULT_RANK_TOL * np.max(d):
        raise SubproblemSingular("frame is rank deficient")
    return sla.solve_triangular(R, solve(Q, data).T, lower=False).T


class LyapunovObjective(Objective):
    """``f(X) = 1/2 <A X + X A, X> - <B, X>`` with symmetric positive definite ``A``."""

    def __init__(self, data, rank_tol=DEFAULT_RANK_TOL):
        self.data = data
        self.rank_tol = rank_tol

    @property
    def shape(self):
        return self.data.B.shape

    def value(self, X):
        A, B = self.data.A, self.data.B
        return 0.5 * float(np.sum((A @ X + X @ A) * X)) - float(np.sum(B * X))

    def gradient(self, X):
        A = self.data.A
        return A @ X + X @ A - self.data.B

    def hessian_apply(self, X, Z):
        A = self.data.A
        return A @ Z + Z @ A

    def solve_U(self, V):
        return _via_frame(lyapunov_solve_U, np.asarray(V, dtype=float), self.data)

    def solve_V(self, U):
        return _via_frame(lyapunov_solve_V, np.asarray(U, dtype=float), self.data)

    def error(self, pair):
        return lyapunov_proj_err(pair, self.data, self.rank_tol)


# ---------------------------------------------------------------------------
# dense quadratic test bed


@dataclass
class DenseQuadraticData:
    """``f(X) = 1/2 vec(X)^T C vec(X) - <B, X>`` with row-major ``vec``."""

    curvature: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        self.curvature = np.asarray(self.curvature, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        N = self.linear.size
        if self.curvature.shape != (N, N):
            raise ValueError(f"curvature must be {N}x{N}")
        C = self.curvature
        if np.linalg.norm(C - C.T) > 1e-12 * np.linalg.norm(C):
            raise ValueError("curvature must be symmetric")
        if not np.linalg.eigvalsh(C)[0] > 0:
            raise ValueError("curvature must be positive definite")


def _solve_spd(G, rhs, rank_tol):
    w = np.linalg.eigvalsh(G)
    if not w[0] > rank_tol * w[-1]:
        raise SubproblemSingular("block subproblem is singular")
    return sla.solve(G, rhs, assume_a="pos")


def dense_quadratic_solve_U(V, data, rank_tol=DEFAULT_RANK_TOL):
    """Minimize the quadratic over ``{U V^T}``: an ``mk x mk`` SPD solve."""
    V = np.asarray(V, dtype=float)
    m, n = data.linear.shape
    k = V.shape[1]
    K = np.kron(np.eye(m), V)  # vec(U V^T) = K vec(U)
    u = _solve_spd(K.T @ data.curvature @ K, K.T @ data.linear.ravel(), rank_tol)
    return u.reshape(m, k)


def dense_quadratic_solve_V(U, data, rank_tol=DEFAULT_RANK_TOL):
    U = np.asarray(U, dtype=float)
    m, n = data.linear.shape
    k = U.shape[1]
    L = np.einsum("ir,jl->ijlr", U, np.eye(n)).reshape(m * n, n * k)
    v = _solve_spd(L.T @ data.curvature @ L, L.T @ data.linear.ravel(), rank_tol)
    return v.reshape(n, k)


class DenseQuadraticObjective(Objective):
    """General strongly convex quadratic with a dense curvature operator."""

    def __init__(self, data, rank_tol=DEFAULT_RANK_TOL):
        self.data = data
        self.rank_tol = rank_tol

    @property
    def shape(self):
        return self.data.linear.shape

    def value(self, X):
        x = np.asarray(X, dtype=float).ravel()
        return 0.5 * float(x @ self.data.curvature @ x) - float(x @ self.data.linear.ravel())

    def gradient(self, X):
        x = np.asarray(X, dtype=float).ravel()
        return (self.data.curvature @ x).reshape(self.shape) - self.data.linear

    def hessian_apply(self, X, Z):
        return (self.data.curvature @ np.asarray(Z, dtype=float).ravel()).reshape(self.shape)

    def solve_U(self, V):
        return dense_quadratic_solve_U(V, self.data, self.rank_tol)

    def solve_V(self, U):
        return dense_quadratic_solve_V(U, self.data, self.rank_tol)

    def error(self, pair):
        """Relative projected gradient, as for the Lyapunov objective."""
        return projected_gradient_error(self, pair, self.data.linear)
