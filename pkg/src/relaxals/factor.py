"""Rank-k factor pairs and the overrelaxed alternating sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonFinite, RankCollapse, SingularGauge
from .shift import ShiftController
from .trace import ResidualTrace

DEFAULT_RANK_TOL = 1e-10


@dataclass
class FactorPair:
    """Parameter point ``(U, V)`` of the factorization ``X = U V^T``."""

    U: np.ndarray
    V: np.ndarray
    full_rank_checked: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ValueError("U and V must be 2-d arrays")
        if self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"rank mismatch: U is {self.U.shape}, V is {self.V.shape}")
        m, k = self.U.shape
        n = self.V.shape[0]
        if m < k or n < k:
            raise ValueError(f"need m >= k and n >= k, got m={m}, n={n}, k={k}")

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]

    @property
    def rank(self):
        return self.U.shape[1]

    def copy(self):
        return FactorPair(self.U.copy(), self.V.copy(), self.full_rank_checked)

    def check_full_rank(self, rank_tol=DEFAULT_RANK_TOL):
        """Raise :class:`RankCollapse` unless both factors have numerical rank k."""
        for name, M in (("U", self.U), ("V", self.V)):
            s = np.linalg.svd(M, compute_uv=False)
            if s.size and not s[-1] > rank_tol * s[0]:
                raise RankCollapse(f"factor {name} lost numerical rank")
        self.full_rank_checked = True
        return self


def product(pair):
    """The represented matrix ``U V^T``."""
    return pair.U @ pair.V.T


def reparametrize(pair, A, rank_tol=DEFAULT_RANK_TOL):
    """Group action ``(U, V) -> (U A, V A^{-T})``; leaves the product fixed."""
    A = np.asarray(A, dtype=float)
    k = pair.rank
    if A.shape != (k, k):
        raise ValueError(f"gauge must be {k}x{k}, got {A.shape}")
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) * rank_tol >= 1.0:
        raise SingularGauge("gauge matrix is numerically singular")
    # V A^{-T} = (A^{-1} V^T)^T
    return FactorPair(pair.U @ A, np.linalg.solve(A, pair.V.T).T)


def qr_thin(M):
    """Thin QR with a nonnegative diagonal of R.

    Returns ``Q`` (p x k) with orthonormal columns and upper triangular ``R``
    (k x k) with ``M = Q R``.  The sign convention makes the factorization
    unique for full-rank ``M``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise ValueError(f"qr_thin needs a tall matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, R * s[:, None]


def _check_r(R, rank_tol, which):
    d = np.abs(np.diag(R))
    if d.size and not np.min(d) > rank_tol * np.max(d):
        raise RankCollapse(f"blended factor {which} lost numerical rank")


def _identity_qr(M):
    return M, np.eye(M.shape[1])


def relaxed_sweep(pair, obj, omega, rank_tol=DEFAULT_RANK_TOL, orthogonalize=True):
    """One outer iteration of the overrelaxed AO method with QR gauge fixing.

    With ``omega = 1`` this is the plain alternating minimization step.
    ``orthogonalize=False`` replaces both QR factorizations by ``(M, I)``,
    which changes only the representation, not the product.
    """
    qr = qr_thin if orthogonalize else _identity_qr
    U_old, V_old = pair.U, pair.V

    U = obj.solve_U(V_old)
    U = (1.0 - omega) * U_old + omega * U
    Q1, R1 = qr(U)
    _check_r(R1, rank_tol, "U")

    V = obj.solve_V(Q1)
    # old V transported into the gauge of Q1 before blending
    V = (1.0 - omega) * (V_old @ R1.T) + omega * V
    Q2, R2 = qr(V)
    _check_r(R2, rank_tol, "V")

    return FactorPair(Q1 @ R2.T, Q2)


@dataclass
class RelaxConfig:
    omega: float = 1.0
    activation_iter: int = 0
    max_iters: int = 500
    tol: float = 1e-10
    rank_tol: float = DEFAULT_RANK_TOL
    mode: str = "fixed_omega"

    def __post_init__(self):
        if self.mode not in ("fixed_omega", "auto_omega"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")
        if self.activation_iter < 0:
            raise ValueError("activation_iter must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol > 0 or not self.rank_tol > 0:
            raise ValueError("tol and rank_tol must be positive")

    def controller(self):
        if self.mode == "auto_omega":
            return ShiftController.auto(self.activation_iter)
        return ShiftController.fixed(self.omega, self.activation_iter)


def iterate(step, error, state0, cfg, ctrl=None, callback=None):
    """Generic relaxed fixed-point loop shared by the matrix and TT solvers.

    ``step(state, omega)`` performs one sweep, ``error(state)`` returns the
    stopping metric.  Returns the final state and its :class:`ResidualTrace`.
    """
    if ctrl is None:
        ctrl = cfg.controller()
    trace = ResidualTrace()
    state = state0
    ell = 0
    while True:
        err = float(error(state))
        if not math.isfinite(err):
            raise NonFinite(f"error metric became {err} at iteration {ell}")
        trace.append(ell, err, 1.0)
        omega = ctrl.next_omega(trace, ell)
        entry = trace.entries[-1]
        entry.omega_used = float(omega)
        entry.beta_sq_est = ctrl.beta_sq_est
        if callback is not None:
            callback(ell, state)
        if err <= cfg.tol:
            trace.converged = True
            break
        if ell >= cfg.max_iters:
            break
        state = step(state, omega)
        ell += 1
    return state, trace


def run(obj, pair0, cfg, ctrl=None, callback=None):
    """Iterate :func:`relaxed_sweep` until ``obj.error <= cfg.tol``.

    Parameters
    ----------
    obj : Objective
        Supplies the block minimizers and the error metric.
    pair0 : FactorPair
        Full-rank starting point.
    cfg : RelaxConfig
    ctrl : ShiftController, optional
        Built from ``cfg`` when omitted.
    callback : callable, optional
        Called as ``callback(iter, pair)`` after each error evaluation.

    Returns
    -------
    pair : FactorPair
    trace : ResidualTrace
        ``trace.converged`` tells whether the tolerance was met within
        ``cfg.max_iters`` sweeps.
    """
    pair0.check_full_rank(cfg.rank_tol)
    return iterate(
        lambda p, w: relaxed_sweep(p, obj, w, rank_tol=cfg.rank_tol),
        obj.error, pair0, cfg, ctrl=ctrl, callback=callback)
