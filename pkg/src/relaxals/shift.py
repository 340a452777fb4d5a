"""Optimal relaxation parameter and the adaptive shift controller."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .exceptions import DomainError, InsufficientTrace, NonPositiveError

#: upper clamp for beta^2 estimates; keeps the resulting omega strictly below 2
BETA_SQ_MAX = 1.0 - 1e-12


def omega_opt(beta_sq):
    """Asymptotically optimal shift ``2 / (1 + sqrt(1 - beta_sq))``.

    ``beta_sq`` is the linear rate of the unrelaxed method (omega = 1).
    """
    beta_sq = float(beta_sq)
    if not 0.0 <= beta_sq < 1.0:
        raise DomainError(f"beta_sq must lie in [0, 1), got {beta_sq}")
    return 2.0 / (1.0 + math.sqrt(1.0 - beta_sq))


def rho_predicted(omega, beta):
    """Two-block SOR rate on the contracting subspace.

    Parameters
    ----------
    omega : float
        Relaxation parameter in (0, 2).
    beta : float
        Largest modulus of the non-unit Jacobi eigenvalues, in [0, 1).

    Returns
    -------
    float
        ``1 - w + w^2 b^2 / 2 + w b sqrt(1 - w + w^2 b^2 / 4)`` below the
        optimal shift and ``w - 1`` from it on.
    """
    omega = float(omega)
    beta = float(beta)
    if not 0.0 < omega < 2.0:
        raise DomainError(f"omega must lie in (0, 2), got {omega}")
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    w_opt = omega_opt(beta * beta)
    if omega >= w_opt:
        return omega - 1.0
    disc = max(1.0 - omega + 0.25 * omega**2 * beta**2, 0.0)
    return 1.0 - omega + 0.5 * omega**2 * beta**2 + omega * beta * math.sqrt(disc)


def _rate_ratio(trace, ell):
    try:
        e0 = trace.err_at(ell)
        e2 = trace.err_at(ell + 2)
    except KeyError:
        raise InsufficientTrace(f"trace lacks iterations {ell} and {ell + 2}") from None
    if not (e0 > 0.0) or e2 < 0.0:
        raise NonPositiveError(f"cannot estimate a rate from errors {e0}, {e2}")
    return math.sqrt(e2 / e0)


def estimate_beta_sq(trace, ell):
    """Estimate the unrelaxed rate as ``sqrt(err[ell+2] / err[ell])``.

    The result is clamped into ``[0, 1 - 1e-12]``.
    """
    return min(max(_rate_ratio(trace, ell), 0.0), BETA_SQ_MAX)


@dataclass
class ShiftController:
    """Chooses the relaxation parameter for each sweep of a run.

    In ``"fixed"`` mode the controller returns ``fixed_omega`` from
    ``activation_iter`` on (1 before it; the default activation 0 makes it a
    pure passthrough).  In ``"auto"`` mode it returns 1 until
    ``activation_iter``, then estimates beta^2 from the last two unrelaxed
    residuals two steps apart and freezes ``omega_opt`` of that estimate.
    """

    mode: str = "auto"
    fixed_omega: float = 1.0
    activation_iter: int = 0
    est_window_start: Optional[int] = None
    beta_sq_est: Optional[float] = None
    frozen_omega: Optional[float] = None
    clamped: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"unknown controller mode {self.mode!r}")
        if self.mode == "fixed" and not 0.0 < self.fixed_omega < 2.0:
            raise DomainError(f"omega must lie in (0, 2), got {self.fixed_omega}")
        if self.activation_iter < 0:
            raise ValueError("activation_iter must be nonnegative")

    @classmethod
    def fixed(cls, omega, activation_iter=0):
        return cls(mode="fixed", fixed_omega=float(omega),
                   activation_iter=int(activation_iter))

    @classmethod
    def auto(cls, activation_iter):
        return cls(mode="auto", activation_iter=int(activation_iter))

    def reset(self):
        self.est_window_start = None
        self.beta_sq_est = None
        self.frozen_omega = None
        self.clamped = False

    def next_omega(self, trace, iter):
        if iter < self.activation_iter:
            return 1.0
        if self.mode == "fixed":
            return self.fixed_omega
        if self.frozen_omega is not None:
            return self.frozen_omega
        ell = iter - 2
        if ell < 0:
            return 1.0  # retry once the trace is long enough
        try:
            raw = _rate_ratio(trace, ell)
        except InsufficientTrace:
            return 1.0
        self.est_window_start = ell
        self.clamped = raw > BETA_SQ_MAX
        self.beta_sq_est = min(raw, BETA_SQ_MAX)
        self.frozen_omega = omega_opt(self.beta_sq_est)
        return self.frozen_omega


def next_omega(ctrl, trace, iter):
    """Functional form of :meth:`ShiftController.next_omega`."""
    return ctrl.next_omega(trace, iter)
