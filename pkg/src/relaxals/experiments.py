"""Instance builders and runners for the completion, Lyapunov, QTT and oracle studies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import oracle as _oracle
from .factor import FactorPair, RelaxConfig, qr_thin, run
from .objectives import (CompletionData, CompletionObjective, LyapunovData,
                         LyapunovObjective, sample_omega, tridiag_laplacian)
from .shift import ShiftController
from .tt import qtt_ones, qtt_operator, tt_random, tt_run, tt_svd, tt_full

log = logging.getLogger(__name__)

EXPERIMENTS = ("completion", "lyapunov", "qtt", "oracle")
MAX_EXPERIMENT_D = 8

# desk-scale defaults; the published sizes are reachable through flags
DEFAULTS = {
    "completion": dict(n=300, k=10, OS=3.0, activation_iter=12, max_iters=500, tol=1e-10),
    "lyapunov": dict(n=256, k=2, activation_iter=50, max_iters=20000, tol=1e-8),
    "qtt": dict(d=5, k=4, activation_iter=15, max_iters=60, tol=1e-10),
    "oracle": dict(n=5, m=6, k=2, activation_iter=0, max_iters=20000, tol=1e-12),
}


@dataclass
class ExperimentConfig:
    experiment: str
    n: Optional[int] = None
    m: Optional[int] = None
    k: Optional[int] = None
    d: Optional[int] = None
    OS: Optional[float] = None
    omega: object = "auto"  # float or "auto"
    activation_iter: Optional[int] = None
    max_iters: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    output_path: Optional[str] = None
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for key, val in DEFAULTS[self.experiment].items():
            if getattr(self, key) is None:
                setattr(self, key, val)
        if self.m is None:
            self.m = self.n
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.omega != "auto":
            self.omega = float(self.omega)
            if not 0.0 < self.omega < 2.0:
                raise ValueError("omega must lie in (0, 2)")
        for name in ("n", "m", "k", "d"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")
        if self.experiment == "qtt" and self.d > MAX_EXPERIMENT_D:
            raise ValueError(f"qtt experiment is limited to d <= {MAX_EXPERIMENT_D}")
        if self.OS is not None and self.OS < 1:
            raise ValueError("OS must be >= 1")
        if self.activation_iter < 0 or self.max_iters < 1 or not self.tol > 0:
            raise ValueError("invalid iteration settings")

    def controller(self):
        if self.omega == "auto":
            return ShiftController.auto(self.activation_iter)
        return ShiftController.fixed(self.omega, self.activation_iter)

    def relax_config(self):
        return RelaxConfig(
            omega=1.0 if self.omega == "auto" else self.omega,
            activation_iter=self.activation_iter, max_iters=self.max_iters,
            tol=self.tol, mode="auto_omega" if self.omega == "auto" else "fixed_omega")


# ---------------------------------------------------------------------------
# matrix completion


def completion_instance(n, k, OS, seed=0, m=None):
    """Random rank-k ``A = U* V*^T`` with Gaussian factors, sampled entries and a random start."""
    m = n if m is None else m
    rng = np.random.default_rng(seed)
    Us = rng.standard_normal((m, k))
    Vs = rng.standard_normal((n, k))
    omega = sample_omega(n, k, OS, seed=rng, m=m)
    A = Us @ Vs.T
    data = CompletionData.from_matrix(A, omega)
    pair0 = FactorPair(rng.standard_normal((m, k)), rng.standard_normal((n, k)))
    return CompletionObjective(data), A, pair0


def run_completion(cfg):
    obj, _, pair0 = completion_instance(cfg.n, cfg.k, cfg.OS, cfg.seed, m=cfg.m)
    return run(obj, pair0, cfg.relax_config(), ctrl=cfg.controller())


# ---------------------------------------------------------------------------
# Lyapunov equation


def lyapunov_spectrum(n, ratio=0.99, decay=0.5):
    """Singular values ``1, 0.5, 0.5 * ratio`` followed by geometric decay."""
    s = np.empty(n)
    s[0] = 1.0
    if n > 1:
        s[1] = 0.5
    if n > 2:
        s[2] = 0.5 * ratio
        s[3:] = s[2] * decay ** np.arange(1, n - 2)
    return s


def lyapunov_instance(n, k, seed=0, ratio=0.99):
    """``A = (n+1)^2 tridiag(-1, 2, -1)``, ``B = A X* + X* A`` for a synthesized ``X*``."""
    rng = np.random.default_rng(seed)
    A = tridiag_laplacian(n)
    P, _ = qr_thin(rng.standard_normal((n, n)))
    Q, _ = qr_thin(rng.standard_normal((n, n)))
    Xs = (P * lyapunov_spectrum(n, ratio)) @ Q.T
    B = A @ Xs + Xs @ A.T
    pair0 = FactorPair(rng.standard_normal((n, k)), rng.standard_normal((n, k)))
    return LyapunovObjective(LyapunovData(A, B)), Xs, pair0


def run_lyapunov(cfg):
    obj, _, pair0 = lyapunov_instance(cfg.n, cfg.k, cfg.seed, cfg.extra.get("ratio", 0.99))
    return run(obj, pair0, cfg.relax_config(), ctrl=cfg.controller())


# ---------------------------------------------------------------------------
# QTT Lyapunov system


def qtt_instance(d, rank, seed=0):
    """Operator ``I (x) A + A (x) I`` on 2d binary sites, all-ones right-hand side, random start."""
    A = tridiag_laplacian(2**d)
    op = qtt_operator(A)
    rhs = qtt_ones(d)
    x0 = tt_random((2,) * (2 * d), rank, seed=seed)
    return op, rhs, x0


def run_qtt(cfg):
    op, rhs, x0 = qtt_instance(cfg.d, cfg.k, cfg.seed)
    x, trace = tt_run(op, rhs, x0, cfg.relax_config(), ctrl=cfg.controller())
    errs = trace.errors
    head = errs[1:21] if cfg.omega == "auto" or cfg.omega == 1.0 else []
    if any(b > a for a, b in zip(head, head[1:])):
        log.warning("local residual is not monotone over the first sweeps")
    return x, trace


def ones_rank_check(d):
    """TT-SVD ranks of the all-ones ``2^d x 2^d`` matrix in QTT order (all 1)."""
    return tt_svd(tt_full(qtt_ones(d))).ranks


# ---------------------------------------------------------------------------
# spectral oracle


def run_oracle(cfg):
    """Critical point of a dense quadratic, Hessian assembly and the full verification report."""
    identity = bool(cfg.extra.get("identity", False))
    obj, pair0 = _oracle.dense_quadratic_instance(
        cfg.m, cfg.n, cfg.k, seed=cfg.seed, identity=identity,
        noise=0.0 if identity else cfg.extra.get("noise", 0.3),
        cond=cfg.extra.get("cond", 10.0))
    if identity:
        # the instance's own factors already minimize a noise-free problem
        rng = np.random.default_rng([cfg.seed, 1])
        pair0 = FactorPair(rng.standard_normal(pair0.U.shape), rng.standard_normal(pair0.V.shape))
    pair, trace = _oracle.find_critical_point(obj, pair0, tol=cfg.tol, max_iters=cfg.max_iters)
    sor = _oracle.analyze(obj, pair, check=True)
    report = _oracle.oracle_report(sor)
    report.update({"m": cfg.m, "n": cfg.n, "k": cfg.k, "seed": cfg.seed,
                   "critical_point_sweeps": len(trace) - 1,
                   "junction_equality": abs(sor.measure(sor.omega_opt) - (sor.omega_opt - 1.0))})
    return report
