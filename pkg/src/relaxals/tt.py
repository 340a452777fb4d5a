"""Tensor trains, MPO operators and the relaxed one-site ALS sweep.

Cores of a :class:`TTTensor` have shape ``(k_left, n, k_right)``; operator
cores have shape ``(r_left, n_out, n_in, r_right)``.  Positions are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import (NotOrthogonalized, NotPowerOfTwo, RankCollapse,
                         SingularGauge, SolveFailure, TooLarge, ZeroLocalRhs)
from .factor import DEFAULT_RANK_TOL, iterate, qr_thin

MAX_FULL_SIZE = 10**6
MAX_QTT_D = 12


@dataclass
class TTTensor:
    cores: list

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        if not self.cores:
            raise ValueError("a tensor train needs at least one core")
        for c in self.cores:
            if c.ndim != 3:
                raise ValueError("TT cores must be 3-d")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"rank mismatch between cores: {a.shape} and {b.shape}")

    @property
    def d(self):
        return len(self.cores)

    @property
    def shape(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        """Inner ranks ``(k_1, ..., k_{d-1})``."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    def copy(self):
        return TTTensor([c.copy() for c in self.cores])

    def to_text(self):
        """Header ``d``, then per core ``k_left n k_right`` and its row-major entries."""
        lines = [str(self.d)]
        for c in self.cores:
            lines.append(" ".join(str(s) for s in c.shape))
            lines.append(" ".join(repr(float(v)) for v in c.ravel()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        tokens = text.split()
        d = int(tokens[0])
        pos = 1
        cores = []
        for _ in range(d):
            shape = tuple(int(t) for t in tokens[pos:pos + 3])
            pos += 3
            size = int(np.prod(shape))
            cores.append(np.array([float(t) for t in tokens[pos:pos + size]]).reshape(shape))
            pos += size
        return cls(cores)


@dataclass
class TTOperator:
    cores: list

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        for c in self.cores:
            if c.ndim != 4:
                raise ValueError("operator cores must be 4-d")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValueError("operator rank mismatch")

    @property
    def d(self):
        return len(self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[3] for c in self.cores[:-1])

    def to_dense(self):
        """Dense ``N x N`` matrix with row-major multi-indices."""
        N = int(np.prod([c.shape[1] for c in self.cores]))
        if N * N > MAX_FULL_SIZE * 20:
            raise TooLarge(f"dense operator of size {N}x{N}")
        M = self.cores[0][0]  # (n, n, r)
        for c in self.cores[1:]:
            M = np.einsum("ijr,rkls->ikjls", M, c)
            M = M.reshape(M.shape[0] * M.shape[1], M.shape[2] * M.shape[3], M.shape[4])
        return M[:, :, 0]


# ---------------------------------------------------------------------------
# evaluation


def tt_eval(tt, index):
    """Entry ``X[i_1, ..., i_d]`` as a chain product of core slices."""
    if len(index) != tt.d:
        raise ValueError("index length must equal the tensor order")
    v = np.ones((1, 1))
    for c, i in zip(tt.cores, index):
        v = v @ c[:, i, :]
    return float(v[0, 0])


def tt_full(tt, max_size=MAX_FULL_SIZE):
    size = int(np.prod(tt.shape))
    if size > max_size:
        raise TooLarge(f"full tensor would have {size} entries")
    T = tt.cores[0].reshape(tt.cores[0].shape[1], -1)
    for c in tt.cores[1:]:
        T = T @ c.reshape(c.shape[0], -1)
        T = T.reshape(-1, c.shape[2])
    return T.reshape(tt.shape)


def tt_inner(x, y):
    v = np.ones((1, 1))
    for a, b in zip(x.cores, y.cores):
        v = np.einsum("ab,aic,bie->ce", v, a, b)
    return float(v[0, 0])


def tt_norm(x):
    return math.sqrt(max(tt_inner(x, x), 0.0))


def tt_op_inner(x, op, y):
    """``<x, A y>``."""
    v = np.ones((1, 1, 1))
    for a, o, b in zip(x.cores, op.cores, y.cores):
        v = np.einsum("asb,aic,sijt,bje->cte", v, a, o, b)
    return float(v[0, 0, 0])


def tt_matvec(op, x):
    """Exact ``A x`` in TT format; ranks multiply."""
    cores = []
    for o, c in zip(op.cores, x.cores):
        r1, n, _, r2 = o.shape
        k1, _, k2 = c.shape
        cores.append(np.einsum("sijt,ajb->saitb", o, c).reshape(r1 * k1, n, r2 * k2))
    return TTTensor(cores)


def quadratic_energy(x, op, rhs):
    """``1/2 <x, A x> - <b, x>``."""
    return 0.5 * tt_op_inner(x, op, x) - tt_inner(rhs, x)


def tt_add(x, y):
    """Sum of two trains (TTTensor or TTOperator) by block stacking of cores."""
    if x.d != y.d:
        raise ValueError("orders differ")
    cls = type(x)
    d = x.d
    if d == 1:
        return cls([x.cores[0] + y.cores[0]])
    cores = []
    for mu, (a, b) in enumerate(zip(x.cores, y.cores)):
        if mu == 0:
            cores.append(np.concatenate([a, b], axis=-1))
        elif mu == d - 1:
            cores.append(np.concatenate([a, b], axis=0))
        else:
            shape = (a.shape[0] + b.shape[0],) + a.shape[1:-1] + (a.shape[-1] + b.shape[-1],)
            c = np.zeros(shape)
            c[: a.shape[0], ..., : a.shape[-1]] = a
            c[a.shape[0]:, ..., a.shape[-1]:] = b
            cores.append(c)
    return cls(cores)


def tt_ones(shape):
    return TTTensor([np.ones((1, n, 1)) for n in shape])


def tt_random(shape, ranks, seed=None):
    """Gaussian cores; each requested rank is capped at the feasible maximum."""
    rng = np.random.default_rng(seed)
    d = len(shape)
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (d - 1)
    ranks = list(ranks)
    if len(ranks) != d - 1:
        raise ValueError("need d - 1 ranks")
    full = [1] + [min(r, int(np.prod(shape[: i + 1])), int(np.prod(shape[i + 1:])))
                  for i, r in enumerate(ranks)] + [1]
    return TTTensor([rng.standard_normal((full[i], shape[i], full[i + 1])) for i in range(d)])


# ---------------------------------------------------------------------------
# gauge and orthogonalization


def apply_gauge(tt, gauges, rank_tol=DEFAULT_RANK_TOL):
    """Slice-wise action ``U^mu(:, i, :) -> A_{mu-1}^{-1} U^mu(:, i, :) A_mu``."""
    if len(gauges) != tt.d - 1:
        raise ValueError("need one gauge matrix per bond")
    gauges = [np.asarray(A, dtype=float) for A in gauges]
    for A, k in zip(gauges, tt.ranks):
        if A.shape != (k, k):
            raise ValueError(f"gauge must be {k}x{k}")
        if np.linalg.cond(A) * rank_tol >= 1.0:
            raise SingularGauge("gauge matrix is numerically singular")
    cores = []
    for mu, c in enumerate(tt.cores):
        if mu > 0:
            k1, n, k2 = c.shape
            c = np.linalg.solve(gauges[mu - 1], c.reshape(k1, n * k2)).reshape(k1, n, k2)
        if mu < tt.d - 1:
            c = np.einsum("aib,bc->aic", c, gauges[mu])
        cores.append(c)
    return TTTensor(cores)


def _check_r(R, rank_tol, where):
    d = np.abs(np.diag(R))
    if d.size and not np.min(d) > rank_tol * np.max(d):
        raise RankCollapse(f"rank deficiency at core {where}")


def _left_qr(core, rank_tol, where):
    k1, n, k2 = core.shape
    if k1 * n < k2:
        raise RankCollapse(f"rank {k2} exceeds unfolding size {k1 * n} at core {where}")
    Q, R = qr_thin(core.reshape(k1 * n, k2))
    _check_r(R, rank_tol, where)
    return Q.reshape(k1, n, k2), R


def _right_lq(core, rank_tol, where):
    k1, n, k2 = core.shape
    if n * k2 < k1:
        raise RankCollapse(f"rank {k1} exceeds unfolding size {n * k2} at core {where}")
    Q, R = qr_thin(core.reshape(k1, n * k2).T)
    _check_r(R, rank_tol, where)
    return Q.T.reshape(k1, n, k2), R.T  # core = L @ Q


def orthogonalize(tt, pivot, rank_tol=DEFAULT_RANK_TOL):
    """Left-orthogonal cores before ``pivot``, right-orthogonal after it.

    Only the representation changes; the full tensor is preserved.
    """
    if not 0 <= pivot < tt.d:
        raise ValueError(f"pivot must lie in [0, {tt.d})")
    cores = [c.copy() for c in tt.cores]
    for mu in range(pivot):
        cores[mu], R = _left_qr(cores[mu], rank_tol, mu)
        cores[mu + 1] = np.einsum("ab,bic->aic", R, cores[mu + 1])
    for mu in range(tt.d - 1, pivot, -1):
        cores[mu], L = _right_lq(cores[mu], rank_tol, mu)
        cores[mu - 1] = np.einsum("aib,bc->aic", cores[mu - 1], L)
    return TTTensor(cores)


def is_orthogonalized(tt, pivot, tol=1e-10):
    for mu, c in enumerate(tt.cores):
        k1, n, k2 = c.shape
        if mu < pivot:
            M = c.reshape(k1 * n, k2)
            if np.linalg.norm(M.T @ M - np.eye(k2)) > tol:
                return False
        elif mu > pivot:
            M = c.reshape(k1, n * k2)
            if np.linalg.norm(M @ M.T - np.eye(k1)) > tol:
                return False
    return True


def tt_svd(T, max_rank=None, tol=1e-12):
    """Sequential truncated SVD compression of a dense tensor.

    Each of the ``d - 1`` truncations discards at most
    ``tol * ||T|| / sqrt(d - 1)`` in Frobenius norm, so the total error is
    below ``tol * ||T||`` unless ``max_rank`` binds.
    """
    T = np.asarray(T, dtype=float)
    if T.size > MAX_FULL_SIZE * 20:
        raise TooLarge(f"tensor with {T.size} entries")
    shape = T.shape
    d = len(shape)
    if d == 1:
        return TTTensor([T.reshape(1, -1, 1)])
    delta = tol * np.linalg.norm(T) / math.sqrt(d - 1)
    cores = []
    k = 1
    C = T.reshape(shape[0], -1)
    for mu in range(d - 1):
        C = C.reshape(k * shape[mu], -1)
        U, s, Vt = np.linalg.svd(C, full_matrices=False)
        # smallest r with tail energy <= delta^2
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
        r = int(np.sum(tail > delta))
        r = max(r, 1)
        if max_rank is not None:
            r = min(r, max_rank)
        cores.append(U[:, :r].reshape(k, shape[mu], r))
        C = s[:r, None] * Vt[:r]
        k = r
    cores.append(C.reshape(k, shape[-1], 1))
    return TTTensor(cores)


def tt_operator_from_dense(M, shape, tol=1e-12):
    """MPO of a dense operator ``M`` acting on tensors of the given mode sizes."""
    shape = tuple(shape)
    d = len(shape)
    M = np.asarray(M, dtype=float).reshape(shape + shape)
    perm = [ax for mu in range(d) for ax in (mu, d + mu)]
    M = M.transpose(perm).reshape([n * n for n in shape])
    t = tt_svd(M, tol=tol)
    return TTOperator([c.reshape(c.shape[0], n, n, c.shape[2]) for c, n in zip(t.cores, shape)])


# ---------------------------------------------------------------------------
# local systems and the relaxed sweep


def _op_left(env, x, o):
    return np.einsum("asb,aic,sijt,bje->cte", env, x, o, x)


def _op_right(env, x, o):
    return np.einsum("cte,aic,sijt,bje->asb", env, x, o, x)


def _rhs_left(env, x, b):
    return np.einsum("ab,aic,bie->ce", env, x, b)


def _rhs_right(env, x, b):
    return np.einsum("ce,aic,bie->ab", env, x, b)


def _right_envs(x, op, rhs):
    d = x.d
    Rop = [None] * d
    Rb = [None] * d
    Rop[-1] = np.ones((1, 1, 1))
    Rb[-1] = np.ones((1, 1))
    for mu in range(d - 1, 0, -1):
        Rop[mu - 1] = _op_right(Rop[mu], x.cores[mu], op.cores[mu])
        Rb[mu - 1] = _rhs_right(Rb[mu], x.cores[mu], rhs.cores[mu])
    return Rop, Rb


def _local(Lop, Rop, Lb, Rb, o, b):
    k1, r1, _ = Lop.shape
    k2 = Rop.shape[0]
    n = o.shape[1]
    H = np.einsum("asb,sijt,cte->aicbje", Lop, o, Rop).reshape(k1 * n * k2, k1 * n * k2)
    rhs = np.einsum("ab,bie,ce->aic", Lb, b, Rb).reshape(-1)
    return 0.5 * (H + H.T), rhs


def local_system(op, rhs, tt, mu, check=True):
    """Galerkin projection of ``A x = b`` onto the frame of core ``mu``.

    ``tt`` must be orthogonalized with pivot ``mu`` so the frame is orthonormal.
    Returns ``(H_loc, b_loc)`` of size ``k_{mu-1} n_mu k_mu``.
    """
    if check and not is_orthogonalized(tt, mu):
        raise NotOrthogonalized(f"tensor train is not orthogonalized at pivot {mu}")
    Lop = np.ones((1, 1, 1))
    Lb = np.ones((1, 1))
    for nu in range(mu):
        Lop = _op_left(Lop, tt.cores[nu], op.cores[nu])
        Lb = _rhs_left(Lb, tt.cores[nu], rhs.cores[nu])
    Rop = np.ones((1, 1, 1))
    Rb = np.ones((1, 1))
    for nu in range(tt.d - 1, mu, -1):
        Rop = _op_right(Rop, tt.cores[nu], op.cores[nu])
        Rb = _rhs_right(Rb, tt.cores[nu], rhs.cores[nu])
    return _local(Lop, Rop, Lb, Rb, op.cores[mu], rhs.cores[mu])


def _solve_local(H, b, mu):
    try:
        return sla.solve(H, b, assume_a="sym")
    except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise SolveFailure(f"local system {mu}: {exc}") from None


def relaxed_als_sweep(tt, op, rhs, omega, rank_tol=DEFAULT_RANK_TOL):
    """One left-to-right relaxed one-site ALS sweep for ``min 1/2 <x, A x> - <b, x>``.

    At each core the local minimizer is blended with the current core, which
    already carries the R factor pushed from the previous position, i.e. the
    old core expressed in the current gauge.
    """
    x = orthogonalize(tt, 0, rank_tol)
    cores = x.cores
    d = x.d
    Rop, Rb = _right_envs(x, op, rhs)
    Lop = np.ones((1, 1, 1))
    Lb = np.ones((1, 1))
    for mu in range(d):
        H, b = _local(Lop, Rop[mu], Lb, Rb[mu], op.cores[mu], rhs.cores[mu])
        u = _solve_local(H, b, mu).reshape(cores[mu].shape)
        new = (1.0 - omega) * cores[mu] + omega * u
        if mu < d - 1:
            cores[mu], R = _left_qr(new, rank_tol, mu)
            cores[mu + 1] = np.einsum("ab,bic->aic", R, cores[mu + 1])
            Lop = _op_left(Lop, cores[mu], op.cores[mu])
            Lb = _rhs_left(Lb, cores[mu], rhs.cores[mu])
        else:
            cores[mu] = new
    return TTTensor(cores)


def max_local_residual(tt, op, rhs, rank_tol=DEFAULT_RANK_TOL):
    """Largest relative residual ``||H_loc u - b_loc|| / ||b_loc||`` over all cores."""
    x = orthogonalize(tt, 0, rank_tol)
    cores = x.cores
    Rop, Rb = _right_envs(x, op, rhs)
    Lop = np.ones((1, 1, 1))
    Lb = np.ones((1, 1))
    worst = 0.0
    for mu in range(x.d):
        H, b = _local(Lop, Rop[mu], Lb, Rb[mu], op.cores[mu], rhs.cores[mu])
        nb = np.linalg.norm(b)
        if nb == 0.0:
            raise ZeroLocalRhs(f"projected right-hand side vanishes at core {mu}")
        worst = max(worst, float(np.linalg.norm(H @ cores[mu].ravel() - b) / nb))
        if mu < x.d - 1:
            cores[mu], R = _left_qr(cores[mu], rank_tol, mu)
            cores[mu + 1] = np.einsum("ab,bic->aic", R, cores[mu + 1])
            Lop = _op_left(Lop, cores[mu], op.cores[mu])
            Lb = _rhs_left(Lb, cores[mu], rhs.cores[mu])
    return worst


def tt_run(op, rhs, tt0, cfg, ctrl=None, callback=None):
    """Relaxed TT-ALS until the maximal local residual drops below ``cfg.tol``."""
    return iterate(
        lambda x, w: relaxed_als_sweep(x, op, rhs, w, rank_tol=cfg.rank_tol),
        lambda x: max_local_residual(x, op, rhs, rank_tol=cfg.rank_tol),
        tt0, cfg, ctrl=ctrl, callback=callback)


# ---------------------------------------------------------------------------
# quantized representation


def _log2_size(N):
    d = int(round(math.log2(N))) if N > 0 else -1
    if d < 1 or 2**d != N:
        raise NotPowerOfTwo(f"size {N} is not a power of two")
    return d


def qtt_reshape(M):
    """``2^d x 2^d`` matrix -> order-2d tensor of 2s (row bits then column bits, MSB first)."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    d = _log2_size(M.shape[0])
    if 2 * d > 2 * MAX_QTT_D:
        raise TooLarge(f"d = {d} exceeds {MAX_QTT_D}")
    return M.reshape((2,) * (2 * d))


def qtt_unreshape(T):
    T = np.asarray(T)
    N = int(round(math.sqrt(T.size)))
    return T.reshape(N, N)


def qtt_operator(A, tol=1e-12):
    """MPO on 2d binary sites for ``X -> A X + X A^T`` in the ``qtt_reshape`` order.

    Builds the d-site MPO of ``A`` by TT-SVD of its bit-interleaved
    reshaping, then assembles the Kronecker sum ``A (x) I + I (x) A`` exactly.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    d = _log2_size(A.shape[0])
    if d > MAX_QTT_D:
        raise TooLarge(f"d = {d} exceeds {MAX_QTT_D}")
    a = tt_operator_from_dense(A, (2,) * d, tol=tol)
    ident = [np.eye(2).reshape(1, 2, 2, 1) for _ in range(d)]
    rows = TTOperator(a.cores + ident)  # A X acts on the row bits
    cols = TTOperator(ident + a.cores)  # X A^T acts on the column bits with A itself
    return tt_add(rows, cols)


def qtt_ones(d):
    """All-ones ``2^d x 2^d`` matrix in QTT format (all ranks 1)."""
    return tt_ones((2,) * (2 * d))
