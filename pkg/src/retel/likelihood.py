"""Tilted weights and log-likelihoods for EL, ETEL, AETEL, WETEL and RETEL.

Log-probabilities are formed as ``exponent - log_normalizer`` straight from
the solver output, so nothing underflows when ``|lambda|`` is large. A hull
violation gives ``-inf``; that is a value, not an error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .model import Dataset, MomentMatrix, PseudoData, Regularization, aetel_augment
from .solver import (
    DEFAULT_SETTINGS,
    DualSolution,
    SolverError,
    SolverSettings,
    Status,
    solve_el,
    solve_etel,
    solve_retel,
    solve_wetel,
)

__all__ = [
    "Method",
    "TiltedWeights",
    "LogLik",
    "weights_from_dual",
    "log_etel",
    "log_retel",
    "log_aetel",
    "log_wetel",
    "log_el",
    "loglik",
    "batch_loglik",
    "fast_loglik",
    "mean_model_curve",
]


class Method(str, enum.Enum):
    EL = "EL"
    ETEL = "ETEL"
    AETEL = "AETEL"
    WETEL = "WETEL"
    RETEL_F = "RETEL_f"
    RETEL_R = "RETEL_r"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, Method):
            return name
        for m in cls:
            if m.value.lower() == str(name).strip().lower():
                return m
        raise ValueError(f"unknown method {name!r}")

    @property
    def regularized(self) -> bool:
        return self in (Method.RETEL_F, Method.RETEL_R)


@dataclass(frozen=True)
class TiltedWeights:
    p: np.ndarray
    p_c: float | None = None

    def total(self) -> float:
        return float(self.p.sum() + (self.p_c or 0.0))


@dataclass(frozen=True)
class LogLik:
    log_l: float
    log_r: float
    method: Method
    solution: DualSolution | None = None


_NEG_INF = -math.inf


def _log_probs(G, logw, sol: DualSolution):
    a = logw + G @ sol.lam
    return a - sol.log_normalizer


def _penalty_exponent(sol: DualSolution) -> float:
    lam = sol.lam
    return sol.log_tau + lam @ sol.mu + 0.5 * lam @ sol.sigma @ lam


_SMALL = 0.5


def _rel_log_norm(A, b=None, tau=0.0):
    """``log((sum_i e^{a_i} + tau e^b) / (n + tau))`` per row of ``A`` (``B x n``).

    Near ``lam = 0`` the expm1/log1p form keeps the log-ratio exactly 0 at 0.
    """
    A = np.atleast_2d(A)
    n = A.shape[1]
    tot = n + tau
    bb = np.zeros(A.shape[0]) if b is None else np.atleast_1d(np.asarray(b, float))
    big = np.maximum(np.abs(A).max(axis=1), np.abs(bb) if tau > 0 else 0.0)
    small = big <= _SMALL
    out = np.empty(A.shape[0])
    if small.any():
        s = np.expm1(A[small]).sum(axis=1)
        if tau > 0:
            s = s + tau * np.expm1(bb[small])
        out[small] = np.log1p(s / tot)
    if (~small).any():
        cols = [A[~small]]
        if tau > 0:
            cols.append((math.log(tau) + bb[~small])[:, None])
        Z = np.concatenate(cols, axis=1)
        m = Z.max(axis=1)
        out[~small] = m + np.log(np.exp(Z - m[:, None]).sum(axis=1)) - math.log(tot)
    return out


def weights_from_dual(M: MomentMatrix, sol: DualSolution, reg: Regularization | None = None, pseudo: PseudoData | None = None) -> TiltedWeights:
    """Probabilities implied by a converged dual solution.

    ETEL and AETEL: ``p_i`` proportional to ``exp(lam' g_i)``. RETEL: also
    returns ``p_c = p_n / c_n``. WETEL: ``p_i`` proportional to
    ``w_i exp(lam' g_i)`` over the data and pseudo rows. EL:
    ``p_i = 1 / (n (1 + lam' g_i))``.
    """
    if sol.status is not Status.CONVERGED:
        raise ValueError(f"weights need a converged solution, got {sol.status.value}")
    if not isinstance(M, MomentMatrix):
        M = MomentMatrix(M)
    if sol.family == "EL":
        return TiltedWeights(1.0 / (M.n * (1.0 + M.g @ sol.lam)))
    if sol.family == "RETEL":
        lp = _log_probs(M.g, 0.0, sol)
        return TiltedWeights(np.exp(lp), float(np.exp(_penalty_exponent(sol) - sol.log_normalizer)))
    if sol.family == "WETEL":
        if pseudo is None:
            raise ValueError("WETEL weights need the pseudo-data")
        G = np.vstack([M.g, pseudo.rows])
        logw = np.concatenate([np.zeros(M.n), np.full(pseudo.m, -math.log(pseudo.m))])
        return TiltedWeights(np.exp(_log_probs(G, logw, sol)))
    return TiltedWeights(np.exp(_log_probs(M.g, 0.0, sol)))


def log_etel(M: MomentMatrix, s: SolverSettings = DEFAULT_SETTINGS) -> LogLik:
    M = M if isinstance(M, MomentMatrix) else MomentMatrix(M)
    sol = solve_etel(M, s)
    if sol.status is not Status.CONVERGED:
        return LogLik(_NEG_INF, _NEG_INF, Method.ETEL, sol)
    a = M.g @ sol.lam
    log_l = float(_log_probs(M.g, 0.0, sol).sum())
    return LogLik(log_l, float(a.sum() - M.n * _rel_log_norm(a)[0]), Method.ETEL, sol)


def log_aetel(M: MomentMatrix, a_n: float | None = None, s: SolverSettings = DEFAULT_SETTINGS) -> LogLik:
    """ETEL on the ``n + 1`` rows after appending the adjustment row."""
    A = aetel_augment(M if isinstance(M, MomentMatrix) else MomentMatrix(M), a_n)
    sol = solve_etel(A, s)
    if sol.status is not Status.CONVERGED:
        return LogLik(_NEG_INF, _NEG_INF, Method.AETEL, sol)
    a = A.g @ sol.lam
    log_l = float(_log_probs(A.g, 0.0, sol).sum())
    return LogLik(log_l, float(a.sum() - A.n * _rel_log_norm(a)[0]), Method.AETEL, sol)


def log_retel(
    M: MomentMatrix,
    reg: Regularization,
    data: Dataset | None = None,
    variant: str = "f",
    s: SolverSettings = DEFAULT_SETTINGS,
) -> LogLik:
    """``variant='f'`` keeps the continuous-component mass ``p_c``; ``'r'`` drops it.

    Raises :class:`SolverError` if the penalized dual stops early.
    """
    if variant not in ("f", "r"):
        raise ValueError("variant must be 'f' or 'r'")
    M = M if isinstance(M, MomentMatrix) else MomentMatrix(M)
    sol = solve_retel(M, reg, data, s)
    tau = math.exp(sol.log_tau)
    n = M.n
    sum_lp = float(_log_probs(M.g, 0.0, sol).sum())
    a = M.g @ sol.lam
    b = float(_penalty_exponent(sol) - sol.log_tau)
    d = _rel_log_norm(a, b, tau)[0]
    if variant == "r":
        return LogLik(sum_lp, float(a.sum() - n * d), Method.RETEL_R, sol)
    log_pc = float(_penalty_exponent(sol) - sol.log_normalizer)
    return LogLik(sum_lp + log_pc, float(a.sum() + b - (n + 1) * d), Method.RETEL_F, sol)


def log_wetel(M: MomentMatrix, pseudo: PseudoData, s: SolverSettings = DEFAULT_SETTINGS) -> LogLik:
    """``log L = N sum w_i log p_i`` and ``log R = N sum w_i log(p_i / w_i)``."""
    M = M if isinstance(M, MomentMatrix) else MomentMatrix(M)
    pseudo = pseudo if isinstance(pseudo, PseudoData) else PseudoData(pseudo)
    sol = solve_wetel(M, pseudo, s)
    if sol.status is not Status.CONVERGED:
        return LogLik(_NEG_INF, _NEG_INF, Method.WETEL, sol)
    n, m = M.n, pseudo.m
    N = n + m
    G = np.vstack([M.g, pseudo.rows])
    logw_rel = np.concatenate([np.zeros(n), np.full(m, -math.log(m))])
    lp = _log_probs(G, logw_rel, sol)
    log_w = logw_rel - math.log(n + 1)
    w = np.exp(log_w)
    log_l = float(N * (w @ lp))
    log_r = float(N * (w @ (lp - log_w)))
    return LogLik(log_l, log_r, Method.WETEL, sol)


def log_el(M: MomentMatrix, s: SolverSettings = DEFAULT_SETTINGS) -> LogLik:
    M = M if isinstance(M, MomentMatrix) else MomentMatrix(M)
    sol = solve_el(M, s)
    if sol.status is not Status.CONVERGED:
        return LogLik(_NEG_INF, _NEG_INF, Method.EL, sol)
    log_r = -float(np.log1p(M.g @ sol.lam).sum())
    return LogLik(log_r - M.n * math.log(M.n), log_r, Method.EL, sol)


def loglik(method, M: MomentMatrix, reg: Regularization | None = None, data: Dataset | None = None, *, a_n=None, pseudo=None, s=DEFAULT_SETTINGS) -> LogLik:
    """Dispatch on ``method``."""
    method = Method.parse(method)
    if method is Method.ETEL:
        return log_etel(M, s)
    if method is Method.EL:
        return log_el(M, s)
    if method is Method.AETEL:
        return log_aetel(M, a_n, s)
    if method is Method.WETEL:
        return log_wetel(M, pseudo, s)
    return log_retel(M, reg, data, "f" if method is Method.RETEL_F else "r", s)


def batch_loglik(method, G3, *, mu=None, sigma=None, tau=None, a_n=None, s: SolverSettings = DEFAULT_SETTINGS):
    """Log-likelihoods for a stack of ``B`` moment matrices ``G3[b]`` (``B x n x p``).

    ``mu`` is ``B x p`` and ``sigma`` ``B x p x p`` for the RETEL methods.
    Returns ``(log_l, log_r)`` arrays of length ``B``; ``-inf`` marks a hull
    violation. A penalized solve that fails to converge raises SolverError.
    """
    method = Method.parse(method)
    G3 = np.ascontiguousarray(G3, dtype=float)
    if G3.ndim == 2:
        G3 = G3[:, :, None]
    B, n, p = G3.shape
    cap = s.cap(p)
    if method is Method.EL:
        lam, st = K.el_newton_batch(G3, s.grad_tol, s.max_iter, cap, s.line_search_shrink, s.hull_screen)
        z = 1.0 + np.einsum("bnp,bp->bn", G3, lam)
        ok = st == K.CONVERGED
        log_r = np.full(B, _NEG_INF)
        log_r[ok] = -np.log(z[ok]).sum(axis=1)
        return log_r - n * math.log(n), log_r
    if method is Method.AETEL:
        a = (max(1.0, math.log(n) / 2.0) if a_n is None else a_n)
        extra = -(a / n) * G3.sum(axis=1, keepdims=True)
        G3 = np.ascontiguousarray(np.concatenate([G3, extra], axis=1))
        n += 1
    pen = method.regularized
    if pen:
        MU = np.array(np.broadcast_to(np.asarray(mu, float).reshape(-1, p), (B, p)))
        SS = np.array(np.broadcast_to(np.asarray(sigma, float).reshape(-1, p, p), (B, p, p)))
        logtau = math.log(tau)
    else:
        MU = np.zeros((B, p))
        SS = np.zeros((B, p, p))
        logtau = 0.0
    logw = np.zeros(n)
    lam, st, F = K.tilt_newton_batch(G3, logw, pen, MU, SS, logtau, s.grad_tol, s.max_iter, cap, s.line_search_shrink, s.hull_screen)
    ok = st == K.CONVERGED
    if pen and not ok.all():
        bad = int(np.argmin(ok))
        raise SolverError(f"RETEL dual did not converge for batch element {bad}")
    A = np.einsum("bnp,bp->bn", G3, lam)
    sum_lp = np.where(ok, (A - F[:, None]).sum(axis=1), _NEG_INF)
    if not pen:
        with np.errstate(invalid="ignore", over="ignore"):
            log_r = A.sum(axis=1) - n * _rel_log_norm(A)
        return sum_lp, np.where(ok, log_r, _NEG_INF)
    b = np.einsum("bp,bp->b", lam, MU) + 0.5 * np.einsum("bp,bpq,bq->b", lam, SS, lam)
    d = _rel_log_norm(A, b, tau)
    if method is Method.RETEL_R:
        return sum_lp, A.sum(axis=1) - n * d
    return sum_lp + logtau + b - F, A.sum(axis=1) + b - (n + 1) * d


_CODES = {
    Method.EL: K.EL_CODE,
    Method.ETEL: K.ETEL_CODE,
    Method.AETEL: K.AETEL_CODE,
    Method.RETEL_F: K.RETEL_F_CODE,
    Method.RETEL_R: K.RETEL_R_CODE,
}


def fast_loglik(method, G, mu=None, sigma=None, tau=1.0, a_n=None, s: SolverSettings = DEFAULT_SETTINGS):
    """``(log L, log R)`` for one ``n x p`` moment matrix with no wrapper objects.

    Meant for MCMC targets. WETEL is not supported here. A penalized solve
    that fails returns NaN rather than raising.
    """
    method = Method.parse(method)
    G = np.ascontiguousarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    n, p = G.shape
    if method.regularized:
        mu = np.array(mu, dtype=float).reshape(p)
        sigma = np.array(sigma, dtype=float).reshape(p, p)
        logtau = math.log(tau)
    else:
        mu, sigma, logtau = np.zeros(p), np.zeros((p, p)), 0.0
    a = max(1.0, math.log(n) / 2.0) if a_n is None else float(a_n)
    return K.loglik_kernel(G, _CODES[method], mu, sigma, logtau, a, s.grad_tol, s.max_iter, s.cap(p), s.line_search_shrink)


def mean_model_curve(method, x, thetas, *, tau=None, preset="invariant-mean", a_n=None, s: SolverSettings = DEFAULT_SETTINGS):
    """Log-likelihood of the scalar mean model ``g = x - theta`` over a grid.

    ``preset`` picks the RETEL penalty: ``invariant-mean`` (``mu = xbar -
    theta``, ``Sigma = 1``), ``centered`` (``mu = 0``), ``sample-moments`` or
    ``figure2`` (``mu = -theta``).
    """
    x = np.asarray(x, float).ravel()
    thetas = np.asarray(thetas, float).ravel()
    G3 = x[None, :, None] - thetas[:, None, None]
    method = Method.parse(method)
    mu = sigma = None
    if method.regularized:
        B = thetas.shape[0]
        if preset == "invariant-mean":
            mu = x.mean() - thetas
            sigma = np.ones(B)
        elif preset == "centered":
            mu = np.zeros(B)
            sigma = np.ones(B)
        elif preset == "sample-moments":
            r = x[None, :] - thetas[:, None]
            mu = r.mean(axis=1)
            sigma = (r * r).sum(axis=1) / (x.shape[0] - 1)
        elif preset == "figure2":
            mu = -thetas
            sigma = np.ones(B)
        else:
            raise ValueError(f"unknown preset {preset!r}")
    return batch_loglik(method, G3, mu=mu, sigma=sigma, tau=tau, a_n=a_n, s=s)
