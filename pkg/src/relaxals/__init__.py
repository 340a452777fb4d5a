"""Alternating least squares with overrelaxation for low-rank matrix and tensor-train problems."""

from .estimators import LowRankLyapunov, MatrixCompletion
from .exceptions import *  # noqa: F401,F403
from .factor import (FactorPair, RelaxConfig, iterate, product, qr_thin,
                     relaxed_sweep, reparametrize, run)
from .objectives import (CompletionData, CompletionObjective, DenseQuadraticData,
                         DenseQuadraticObjective, LyapunovData, LyapunovObjective,
                         Objective, completion_error, lyapunov_proj_err, sample_omega,
                         tangent_project, tridiag_laplacian)
from .oracle import SorSpectrum, analyze, assemble_hessian, find_critical_point, oracle_report
from .shift import ShiftController, estimate_beta_sq, next_omega, omega_opt, rho_predicted
from .trace import ResidualTrace, TraceEntry
from .tt import (TTOperator, TTTensor, apply_gauge, local_system, max_local_residual,
                 orthogonalize, qtt_ones, qtt_operator, qtt_reshape, qtt_unreshape,
                 relaxed_als_sweep, tt_full, tt_random, tt_run, tt_svd)

__version__ = "0.1.0"
