"""Dense spectral analysis of the linearized relaxed AO iteration.

At a critical point ``(U*, V*)`` the derivative of one relaxed sweep is the
two-block SOR error matrix ``T_w = I - N_w^{-1} H`` with ``N_w = D / w + E``,
where ``H`` is the Hessian of ``F(U, V) = f(U V^T)`` in the parameter vector
``[vec(U); vec(V)]`` (row-major blocks, U first).  This module assembles
``H`` and measures every quantity the convergence theory predicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import (AllUnitEigenvalues, Asymmetry, DegenerateSplitting,
                         NoConvergence, SingularN, TooLarge, UnmatchedEigenvalue)
from .factor import FactorPair, RelaxConfig, product, run
from .objectives import DenseQuadraticData, DenseQuadraticObjective
from .shift import omega_opt, rho_predicted

MAX_DIM = 4000
KERNEL_TOL = 1e-8
UNIT_TOL = 1e-8
YOUNG_TOL = 1e-7
# eigenvalues closer than this (relative) are averaged before taking moduli;
# a defective pair at the optimal shift otherwise splits by ~sqrt(eps)
CLUSTER_TOL = 1e-6


def _check_dim(p):
    if p > MAX_DIM:
        raise TooLarge(f"parameter dimension {p} exceeds {MAX_DIM}")


def _param_jacobian(pair):
    """Matrix of ``h -> dU V^T + U dV^T`` acting on ``[vec(dU); vec(dV)]``."""
    U, V = pair.U, pair.V
    m, k = U.shape
    n = V.shape[0]
    JU = np.kron(np.eye(m), V)
    JV = np.einsum("ir,jl->ijlr", U, np.eye(n)).reshape(m * n, n * k)
    return np.hstack([JU, JV])


def _flat_gradient(obj, theta, m, n, k):
    U = theta[: m * k].reshape(m, k)
    V = theta[m * k:].reshape(n, k)
    gU, gV = obj.factor_gradient(FactorPair(U, V))
    return np.concatenate([gU.ravel(), gV.ravel()])


def assemble_hessian(obj, pair, check=False, fd_step=1e-5, fd_rtol=1e-6):
    """Hessian of ``F = f o tau`` at ``pair`` as a dense symmetric matrix.

    Combines the Gauss-Newton term ``J^T (nabla^2 f) J`` with the
    second-order term ``<nabla f, tau''[h, h']>``, which couples the U and V
    blocks through ``kron(G, I_k)``.  With ``check=True`` the result is
    compared against central differences of the factor gradient.
    """
    m, k = pair.U.shape
    n = pair.V.shape[0]
    p = (m + n) * k
    _check_dim(p)
    X = product(pair)
    J = _param_jacobian(pair)
    HJ = np.empty_like(J)
    for c in range(p):
        HJ[:, c] = obj.hessian_apply(X, J[:, c].reshape(m, n)).ravel()
    H = J.T @ HJ
    G = obj.gradient(X)
    cross = np.kron(G, np.eye(k))
    H[: m * k, m * k:] += cross
    H[m * k:, : m * k] += cross.T
    H = 0.5 * (H + H.T)

    if check:
        theta = np.concatenate([pair.U.ravel(), pair.V.ravel()])
        h = fd_step * max(1.0, np.linalg.norm(theta) / np.sqrt(p))
        Hfd = np.empty((p, p))
        for c in range(p):
            e = np.zeros(p)
            e[c] = h
            Hfd[:, c] = (_flat_gradient(obj, theta + e, m, n, k)
                         - _flat_gradient(obj, theta - e, m, n, k)) / (2 * h)
        dev = np.linalg.norm(Hfd - H) / max(np.linalg.norm(H), 1e-300)
        if dev > fd_rtol:
            raise Asymmetry(f"analytic and finite-difference Hessians differ by {dev:.2e}")
    return H


def split_blocks(H, m, n, k):
    """``H = D + E + E^T`` with block diagonal ``D`` and strictly lower ``E``."""
    H = np.asarray(H, dtype=float)
    p = (m + n) * k
    if H.shape != (p, p):
        raise ValueError(f"H must be {p}x{p}")
    a = m * k
    D = H.copy()
    D[:a, a:] = 0.0
    D[a:, :a] = 0.0
    E = np.zeros_like(H)
    E[a:, :a] = H[a:, :a]
    return D, E


def kernel_basis(H, tol=KERNEL_TOL):
    """Orthonormal basis of the numerical null space (eigenvalues below ``tol * lambda_max``)."""
    w, Q = np.linalg.eigh(np.asarray(H, dtype=float))
    scale = max(np.max(np.abs(w)), 0.0) if w.size else 0.0
    q = int(np.sum(np.abs(w) <= tol * scale)) if scale > 0 else w.size
    idx = np.argsort(np.abs(w))[:q]
    return Q[:, np.sort(idx)]


def _n_factor(D, E, omega):
    N = D / omega + E
    try:
        lu = sla.lu_factor(N, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularN(str(exc)) from None
    d = np.abs(np.diag(lu[0]))
    if d.size and not np.min(d) > 1e-14 * np.max(d):
        raise SingularN(f"N_omega is singular at omega={omega}")
    return lu


def t_omega(H, D, E, omega):
    """SOR error matrix ``I - N^{-1} H``, ``N = D / omega + E``."""
    lu = _n_factor(D, E, omega)
    return np.eye(H.shape[0]) - sla.lu_solve(lu, H)


def _complement(K, p):
    if K.shape[1] == 0:
        return np.eye(p)
    return sla.null_space(K.T)


def restricted_t_omega(H, D, E, omega, kernel):
    """``T_omega`` on ``W = N^{-1} (ker H)^perp`` in an orthonormal basis of ``W``."""
    p = H.shape[0]
    lu = _n_factor(D, E, omega)
    W = sla.lu_solve(lu, _complement(kernel, p))
    Qw, _ = np.linalg.qr(W)
    s = np.linalg.svd(np.hstack([kernel, Qw]), compute_uv=False)
    if s.size and not s[-1] > 1e-10 * s[0]:
        raise DegenerateSplitting(f"ker H and W do not span the space at omega={omega}")
    TQ = Qw - sla.lu_solve(lu, H @ Qw)
    return Qw.T @ TQ


def _cluster_centroids(eigs, rel_tol=CLUSTER_TOL):
    """Average eigenvalues lying within ``rel_tol`` of each other."""
    eigs = np.asarray(eigs, dtype=complex)
    left = list(np.argsort(-np.abs(eigs)))
    centroids = []
    while left:
        i = left.pop(0)
        lam = eigs[i]
        tol = rel_tol * max(1.0, abs(lam))
        members = [i] + [j for j in left if abs(eigs[j] - lam) <= tol]
        left = [j for j in left if j not in members]
        centroids.append(np.mean(eigs[members]))
    return np.array(centroids)


def spectral_radius(M):
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(_cluster_centroids(np.linalg.eigvals(M)))))


def rho_on_W(H, D, E, omega, kernel):
    """Spectral radius of ``T_omega`` restricted to its invariant subspace ``W``."""
    return spectral_radius(restricted_t_omega(H, D, E, omega, kernel))


def jacobi_eigs(H, D):
    """Eigenvalues of ``I - D^{-1} H`` (real; computed as a definite pencil)."""
    return np.sort(1.0 - sla.eigh(H, D, eigvals_only=True))


def jacobi_beta(H, D, q=None, mus=None):
    """Largest ``|mu|`` over Jacobi eigenvalues after dropping ``q`` copies each of +1 and -1.

    ``q=None`` drops every eigenvalue within ``1e-8`` of +-1.
    """
    mus = jacobi_eigs(H, D) if mus is None else np.sort(np.asarray(mus))
    keep = np.ones(mus.size, dtype=bool)
    for target in (1.0, -1.0):
        near = np.flatnonzero(np.abs(mus - target) <= UNIT_TOL)
        near = near[np.argsort(np.abs(mus[near] - target))]
        if q is not None:
            near = near[:q]
        keep[near] = False
    rest = mus[keep]
    if rest.size == 0:
        raise AllUnitEigenvalues("every Jacobi eigenvalue is +-1")
    return float(np.max(np.abs(rest)))


def young_lambdas(mu, omega):
    """Both branches ``1 - w + w^2 mu^2 / 2 +- w mu sqrt(1 - w + w^2 mu^2 / 4)``."""
    disc = complex(1.0 - omega + 0.25 * omega**2 * mu**2)
    base = 1.0 - omega + 0.5 * omega**2 * mu**2
    root = omega * mu * np.sqrt(disc)
    return base + root, base - root


@dataclass
class YoungReport:
    omega: float
    pairs: list  # (lambda, mu, branch, deviation)
    unmatched: list

    @property
    def matched(self):
        return not self.unmatched


def young_check(H, D, E, omega, kernel=None, mus=None, tol=YOUNG_TOL, raise_on_fail=True):
    """Match each non-kernel eigenvalue of ``T_omega`` to a Jacobi eigenvalue through Young's relation."""
    if kernel is None:
        kernel = kernel_basis(H)
    if mus is None:
        mus = jacobi_eigs(H, D)
    lam = _cluster_centroids(np.linalg.eigvals(restricted_t_omega(H, D, E, omega, kernel)))
    table = []
    for mu in np.abs(np.asarray(mus, dtype=float)):
        lp, lm = young_lambdas(mu, omega)
        cands = [(+1, lp), (-1, lm)]
        if abs(lp - lm) <= CLUSTER_TOL * max(1.0, abs(lp)):
            # coalescing branches were averaged into one centroid above
            cands.append((0, 0.5 * (lp + lm)))
        table.append((cands, mu))
    pairs, unmatched = [], []
    for l in lam:
        if abs(l - 1.0) <= UNIT_TOL:
            continue
        best = None
        for cands, mu in table:
            for branch, val in cands:
                dev = abs(l - val)
                if best is None or dev < best[3]:
                    best = (complex(l), float(mu), branch, float(dev))
        pairs.append(best)
        if best[3] > tol * max(1.0, abs(l)):
            unmatched.append(best)
    report = YoungReport(float(omega), pairs, unmatched)
    if unmatched and raise_on_fail:
        raise UnmatchedEigenvalue(f"{len(unmatched)} eigenvalues of T_omega unmatched",
                                  offenders=unmatched)
    return report


@dataclass
class SorSpectrum:
    """Dense spectral data of the SOR linearization at one critical point."""

    H: np.ndarray
    D: np.ndarray
    E: np.ndarray
    kernel_basis: np.ndarray
    beta: float
    jacobi_eigs: np.ndarray
    t_omega_eigs: dict = field(default_factory=dict)
    rho: dict = field(default_factory=dict)

    @property
    def q(self):
        return self.kernel_basis.shape[1]

    @property
    def p(self):
        return self.H.shape[0]

    @property
    def rho1(self):
        return self.beta**2

    @property
    def omega_opt(self):
        return omega_opt(self.beta**2)

    @classmethod
    def from_hessian(cls, H, m, n, k, kernel_tol=KERNEL_TOL):
        D, E = split_blocks(H, m, n, k)
        if not np.linalg.eigvalsh(D)[0] > 0:
            raise ValueError("block diagonal part of H is not positive definite")
        K = kernel_basis(H, kernel_tol)
        mus = jacobi_eigs(H, D)
        beta = jacobi_beta(H, D, q=K.shape[1], mus=mus)
        return cls(H, D, E, K, beta, mus)

    def measure(self, omega):
        """Spectral radius on ``W`` at ``omega`` (cached, with eigenvalues)."""
        omega = float(omega)
        if omega not in self.rho:
            M = restricted_t_omega(self.H, self.D, self.E, omega, self.kernel_basis)
            eigs = np.linalg.eigvals(M)
            self.t_omega_eigs[omega] = eigs
            self.rho[omega] = spectral_radius(M)
        return self.rho[omega]

    def young(self, omega, raise_on_fail=False):
        return young_check(self.H, self.D, self.E, omega, kernel=self.kernel_basis,
                           mus=self.jacobi_eigs, raise_on_fail=raise_on_fail)

    def grid_report(self, omegas):
        """One JSON-ready record per shift value."""
        out = []
        for w in omegas:
            rho = self.measure(w)
            out.append({
                "omega": float(w),
                "rho_measured": rho,
                "rho_predicted": rho_predicted(w, self.beta),
                "beta": self.beta,
                "q": self.q,
                "matched": self.young(w).matched,
            })
        return out


def analyze(obj, pair, check=False):
    """Assemble the Hessian at ``pair`` and wrap it in a :class:`SorSpectrum`."""
    m, k = pair.U.shape
    n = pair.V.shape[0]
    return SorSpectrum.from_hessian(assemble_hessian(obj, pair, check=check), m, n, k)


def find_critical_point(obj, pair0, tol=1e-12, max_iters=20000):
    """Run the unrelaxed method until the objective's error metric drops below ``tol``."""
    cfg = RelaxConfig(omega=1.0, max_iters=max_iters, tol=tol)
    pair, trace = run(obj, pair0, cfg)
    if not trace.converged:
        raise NoConvergence(f"error {trace.errors[-1]:.3e} after {max_iters} sweeps")
    return pair, trace


def random_spd(N, rng, cond=10.0):
    """Random SPD matrix with eigenvalues spread log-uniformly over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    w = np.exp(rng.uniform(0.0, np.log(cond), N))
    w[0], w[-1] = 1.0, cond
    C = (Q * w) @ Q.T
    return 0.5 * (C + C.T)


def dense_quadratic_instance(m, n, k, seed=None, cond=10.0, noise=0.3, identity=False):
    """Random strongly convex quadratic with a nearby rank-k critical point.

    The linear term is ``C vec(X0) + noise * G`` for a random rank-k ``X0``;
    with ``noise = 0`` the point ``X0`` is a global minimizer with zero
    gradient.  Returns the objective and a starting pair ``(U0, V0)`` with
    ``U0 V0^T = X0``.
    """
    rng = np.random.default_rng(seed)
    N = m * n
    C = np.eye(N) if identity else random_spd(N, rng, cond)
    U0 = rng.standard_normal((m, k))
    V0 = rng.standard_normal((n, k))
    X0 = U0 @ V0.T
    B = (C @ X0.ravel()).reshape(m, n)
    if noise:
        G = rng.standard_normal((m, n))
        B = B + noise * np.linalg.norm(B) / np.linalg.norm(G) * G
    obj = DenseQuadraticObjective(DenseQuadraticData(C, B))
    return obj, FactorPair(U0, V0)


def default_grid(step=0.25):
    n = int(round(2.0 / step))
    return [round(i * step, 10) for i in range(1, n)]


def oracle_report(sor, omegas=None):
    """Full verification record for one :class:`SorSpectrum`."""
    if omegas is None:
        omegas = default_grid(0.25)
    w_opt = sor.omega_opt
    grid = sorted(set(list(omegas) + [w_opt]))
    rows = sor.grid_report(grid)
    fine = [round(0.01 * i, 10) for i in range(1, 200)]
    rho_fine = [sor.measure(w) for w in fine]
    argmin = fine[int(np.argmin(rho_fine))]
    return {
        "beta": sor.beta,
        "rho1": sor.rho1,
        "omega_opt": w_opt,
        "rho_at_omega_opt": sor.measure(w_opt),
        "q": sor.q,
        "p": sor.p,
        "grid": rows,
        "argmin_fine_grid": argmin,
        "argmin_within_grid_step": abs(argmin - w_opt) <= 0.01 + 1e-12,
        "max_abs_deviation": max(abs(r["rho_measured"] - r["rho_predicted"]) for r in rows),
        "all_matched": all(r["matched"] for r in rows),
    }


def report_json(report):
    return json.dumps(report, indent=1, sort_keys=True)
