"""Convex dual solvers for the tilting multiplier ``lambda``.

All four families start Newton at ``lambda = 0`` and backtrack on the
objective. Exponentials are evaluated after subtracting the largest exponent,
penalty term included, so large tilts do not overflow.

Stationarity is measured on the probability-weighted moment residual, i.e.
the first-order condition divided by the dual objective value. For ETEL this
is ``sum_i p_i g_i``; for RETEL it is ``sum_i p_i g_i + p_c (mu + Sigma lam)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import Dataset, ModelError, MomentMatrix, PseudoData, Regularization

__all__ = [
    "Status",
    "SolverSettings",
    "DualSolution",
    "SolverError",
    "solve_etel",
    "solve_retel",
    "solve_wetel",
    "solve_el",
    "retel_residual",
    "etel_residual",
    "el_residual",
]


class Status(enum.Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    MAX_ITERATIONS = "MaxIterations"


_STATUS = {K.CONVERGED: Status.CONVERGED, K.DIVERGED: Status.DIVERGED, K.MAX_ITER: Status.MAX_ITERATIONS}


class SolverError(RuntimeError):
    """Raised when a penalized solve stops before meeting its tolerance.

    ``solution`` holds the best iterate reached.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class SolverSettings:
    grad_tol: float = 1e-10
    max_iter: int = 100
    divergence_lambda_norm: float | None = None  # default 200 * sqrt(p)
    line_search_shrink: float = 0.5
    hull_screen: bool = True

    def __post_init__(self):
        if not self.grad_tol > 0 or not self.max_iter > 0:
            raise ValueError("grad_tol and max_iter must be positive")
        if self.divergence_lambda_norm is not None and not self.divergence_lambda_norm > 0:
            raise ValueError("divergence_lambda_norm must be positive")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")

    def cap(self, p: int) -> float:
        if self.divergence_lambda_norm is not None:
            return float(self.divergence_lambda_norm)
        return 200.0 * math.sqrt(p)


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True)
class DualSolution:
    """Tilting multiplier plus diagnostics.

    ``log_normalizer`` is ``log`` of the dual objective at ``lam``: ``log d_n``
    for ETEL, ``log c_n`` for RETEL, and the log of the weighted sum for WETEL
    (data weight 1, pseudo weight ``1/m``).
    """

    lam: np.ndarray
    status: Status
    iterations: int
    grad_norm: float
    log_normalizer: float
    family: str
    history: np.ndarray = field(default=None, repr=False)
    # penalty pieces for RETEL, needed again when forming weights
    mu: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)
    log_tau: float | None = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _check_moments(M: MomentMatrix):
    if not isinstance(M, MomentMatrix):
        M = MomentMatrix(M)
    if M.n < 1:
        raise ModelError("need at least one moment row")
    return M


def _tilt(G, logw, s, family, pen=False, mu=None, sigma=None, log_tau=0.0, lam0=None):
    p = G.shape[1]
    mu_a = np.zeros(p) if mu is None else np.ascontiguousarray(mu, dtype=float)
    S_a = np.zeros((p, p)) if sigma is None else np.ascontiguousarray(sigma, dtype=float)
    start = np.zeros(p) if lam0 is None else np.asarray(lam0, float).copy()
    trace = np.empty(s.max_iter + 1)
    lam, st, it, gn, F = K.tilt_newton(
        np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(logw, dtype=float),
        pen,
        mu_a,
        S_a,
        float(log_tau),
        start,
        s.grad_tol,
        s.max_iter,
        s.cap(p),
        s.line_search_shrink,
        s.hull_screen,
        trace,
    )
    hist = trace[: it + 1].copy()
    return DualSolution(
        lam=lam,
        status=_STATUS[int(st)],
        iterations=int(it),
        grad_norm=float(gn),
        log_normalizer=float(F),
        family=family,
        history=hist,
        mu=mu_a if pen else None,
        sigma=S_a if pen else None,
        log_tau=float(log_tau) if pen else None,
    )


def solve_etel(M: MomentMatrix, s: SolverSettings = DEFAULT_SETTINGS, lam0=None) -> DualSolution:
    """Minimize ``sum_i exp(lam' g_i)``.

    ``Diverged`` means the infimum is not attained, i.e. 0 is outside the
    interior of the convex hull of the rows.
    """
    M = _check_moments(M)
    return _tilt(M.g, np.zeros(M.n), s, "ETEL", lam0=lam0)


def solve_retel(
    M: MomentMatrix,
    reg: Regularization,
    data: Dataset | None = None,
    s: SolverSettings = DEFAULT_SETTINGS,
    lam0=None,
    *,
    penalty=None,
) -> DualSolution:
    """Minimize ``d_n(lam) + tau exp(lam' mu + lam' Sigma lam / 2)``.

    The penalized objective is strictly convex and coercive, so a unique
    minimizer always exists. ``M`` may have zero rows (pure penalty).
    ``penalty=(mu, Sigma, log_tau)`` bypasses ``reg`` when already resolved.
    """
    if not isinstance(M, MomentMatrix):
        M = MomentMatrix(M)
    if penalty is None:
        mu, sigma, log_tau = reg.resolve(data, M.theta, M)
    else:
        mu, sigma, log_tau = penalty
    if mu.shape[0] != M.p or sigma.shape != (M.p, M.p):
        raise ModelError(f"penalty dimensions {mu.shape}, {sigma.shape} do not match p={M.p}")
    sol = _tilt(M.g, np.zeros(M.n), s, "RETEL", pen=True, mu=mu, sigma=sigma, log_tau=log_tau, lam0=lam0)
    if sol.status is not Status.CONVERGED:
        raise SolverError(
            f"RETEL dual stopped after {sol.iterations} iterations with residual {sol.grad_norm:.3g}",
            solution=sol,
        )
    return sol


def solve_wetel(M: MomentMatrix, pseudo: PseudoData, s: SolverSettings = DEFAULT_SETTINGS, lam0=None) -> DualSolution:
    """Minimize ``sum_i exp(lam' g_i) + m^{-1} sum_j exp(lam' g~_j)``."""
    M = _check_moments(M)
    if not isinstance(pseudo, PseudoData):
        pseudo = PseudoData(pseudo)
    if pseudo.rows.shape[1] != M.p:
        raise ModelError("pseudo-data width does not match p")
    G = np.vstack([M.g, pseudo.rows])
    logw = np.concatenate([np.zeros(M.n), np.full(pseudo.m, -math.log(pseudo.m))])
    return _tilt(G, logw, s, "WETEL", lam0=lam0)


def solve_el(M: MomentMatrix, s: SolverSettings = DEFAULT_SETTINGS, lam0=None) -> DualSolution:
    """Owen's dual: ``sum_i g_i / (1 + lam' g_i) = 0`` with ``1 + lam' g_i > 1/n``.

    ``log_normalizer`` is left at 0; EL weights are not exponential.
    """
    M = _check_moments(M)
    start = np.zeros(M.p) if lam0 is None else np.asarray(lam0, float).copy()
    trace = np.empty(s.max_iter + 1)
    lam, st, it, gn, f = K.el_newton(
        np.ascontiguousarray(M.g), start, s.grad_tol, s.max_iter, s.cap(M.p), s.line_search_shrink, s.hull_screen, trace
    )
    return DualSolution(lam, _STATUS[int(st)], int(it), float(gn), 0.0, "EL", history=trace[: it + 1].copy())


def etel_residual(G, lam, logw=None) -> float:
    """Independent recomputation of ``|sum_i p_i g_i|`` for a tilt ``lam``."""
    lam = np.atleast_1d(np.asarray(lam, float))
    G = np.asarray(G, float).reshape(-1, len(lam))
    a = G @ lam
    if logw is not None:
        a = a + logw
    w = np.exp(a - a.max())
    return float(np.linalg.norm(w @ G / w.sum()))


def retel_residual(G, lam, mu, sigma, log_tau) -> float:
    """``|sum_i e^{lam'g_i} g_i + p_n (mu + Sigma lam)| / c_n``."""
    G = np.asarray(G, float).reshape(-1, len(mu))
    lam = np.asarray(lam, float)
    sl = mu + sigma @ lam
    a = np.concatenate([G @ lam, [log_tau + lam @ mu + 0.5 * lam @ sigma @ lam]])
    w = np.exp(a - a.max())
    r = w[:-1] @ G + w[-1] * sl
    return float(np.linalg.norm(r / w.sum()))


def el_residual(G, lam) -> float:
    """``|n^{-1} sum_i g_i / (1 + lam' g_i)|``."""
    G = np.asarray(G, float).reshape(-1, len(np.atleast_1d(lam)))
    z = 1.0 + G @ np.atleast_1d(lam)
    return float(np.linalg.norm((G / z[:, None]).mean(axis=0)))
