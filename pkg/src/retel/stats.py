"""Distribution functions, KS uniformity test, KDE, quadrature and KL divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .model import MomentMatrix

__all__ = [
    "DomainError",
    "QuadratureError",
    "normal_cdf",
    "normal_quantile",
    "normal_logpdf",
    "normal_quantile_grid",
    "logistic_logpdf",
    "logistic_cdf",
    "logistic_quantile",
    "cauchy_logpdf",
    "chisq_cdf",
    "chisq_quantile",
    "KSResult",
    "kolmogorov_sf",
    "ks_uniform",
    "DensityEstimate",
    "silverman_bandwidth",
    "kde",
    "adaptive_quad",
    "kl_between",
    "sandwich_omega",
]


class DomainError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    """Adaptive quadrature hit its depth cap; ``value`` is the partial sum."""

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


def _check_prob(q):
    q = np.asarray(q, float)
    if np.any(~((q > 0) & (q < 1))):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    return q


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(q):
    return special.ndtri(_check_prob(q))


def normal_logpdf(x, mean=0.0, sd=1.0):
    z = (np.asarray(x, float) - mean) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2 * math.pi)


def normal_quantile_grid(m: int) -> np.ndarray:
    """Standard-normal quantiles at ``k / (m + 1)``, ``k = 1..m``."""
    if m < 1:
        raise DomainError("m must be positive")
    return special.ndtri(np.arange(1, m + 1) / (m + 1.0))


def logistic_logpdf(x, loc=0.0, scale=1.0):
    z = (np.asarray(x, float) - loc) / scale
    # log(e^{-z} / (1 + e^{-z})^2), symmetric in z
    a = -np.abs(z)
    return a - 2.0 * np.log1p(np.exp(a)) - math.log(scale)


def logistic_cdf(x, loc=0.0, scale=1.0):
    return special.expit((np.asarray(x, float) - loc) / scale)


def logistic_quantile(q, loc=0.0, scale=1.0):
    return loc + scale * special.logit(_check_prob(q))


def cauchy_logpdf(x, loc=0.0, scale=1.0):
    z = (np.asarray(x, float) - loc) / scale
    return -math.log(math.pi * scale) - np.log1p(z * z)


def chisq_cdf(x, df):
    x = np.asarray(x, float)
    return np.where(x > 0, special.gammainc(df / 2.0, np.maximum(x, 0) / 2.0), 0.0)


def chisq_quantile(q, df):
    return 2.0 * special.gammaincinv(df / 2.0, _check_prob(q))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n: int


def kolmogorov_sf(lam: float, max_terms: int = 100, eps: float = 1e-12) -> float:
    """``P(K > lam)`` for the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # theta-function form converges fast for small lam
        s = 0.0
        c = math.pi**2 / (8 * lam * lam)
        for k in range(1, max_terms + 1):
            t = math.exp(-((2 * k - 1) ** 2) * c)
            s += t
            if t < eps * max(s, 1e-300):
                break
        cdf = math.sqrt(2 * math.pi) / lam * s
        return min(1.0, max(0.0, 1.0 - cdf))
    s = 0.0
    for k in range(1, max_terms + 1):
        t = math.exp(-2.0 * k * k * lam * lam)
        s += t if k % 2 else -t
        if t < eps:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_uniform(samples) -> KSResult:
    """One-sample KS test against U(0, 1) with the asymptotic p-value."""
    u = np.sort(np.asarray(samples, float).ravel())
    n = u.shape[0]
    if n < 1:
        raise DomainError("need at least one sample")
    if np.any(~((u >= 0) & (u <= 1))):
        raise DomainError("samples must lie in [0, 1]")
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
    return KSResult(d, kolmogorov_sf(math.sqrt(n) * d), n)


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian-kernel density, renormalized to unit mass on ``grid``."""

    samples: np.ndarray
    bandwidth: float
    grid: np.ndarray
    values: np.ndarray
    norm: float

    @property
    def support(self):
        return float(self.grid[0]), float(self.grid[-1])

    def eval(self, t):
        t = np.asarray(t, float)
        lo, hi = self.support
        out = _kernel_sum(self.samples, self.bandwidth, np.atleast_1d(t)) / self.norm
        out = np.where((np.atleast_1d(t) >= lo) & (np.atleast_1d(t) <= hi), out, 0.0)
        return out if t.ndim else float(out[0])

    __call__ = eval


def _kernel_sum(x, h, t, chunk=2048):
    out = np.empty(t.shape[0])
    c = 1.0 / (x.shape[0] * h * math.sqrt(2 * math.pi))
    for s in range(0, t.shape[0], chunk):
        z = (t[s : s + chunk, None] - x[None, :]) / h
        out[s : s + chunk] = c * np.exp(-0.5 * z * z).sum(axis=1)
    return out


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.shape[0] ** (-0.2)


def kde(samples, grid) -> DensityEstimate:
    x = np.asarray(samples, float).ravel()
    if x.shape[0] < 10:
        raise DomainError("KDE needs at least 10 samples")
    if not x.std() > 0:
        raise DomainError("KDE of zero-variance samples is degenerate")
    grid = np.asarray(grid, float)
    h = silverman_bandwidth(x)
    raw = _kernel_sum(x, h, grid)
    mass = float(np.trapezoid(raw, grid))
    return DensityEstimate(x, h, grid, raw / mass, mass)


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_quad(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson with Richardson correction.

    A panel is accepted once its error estimate is below ``tol`` times its
    share of ``[a, b]``.
    """
    if not a < b:
        raise ValueError("need a < b")
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    stack = [(a, b, fa, fm, fb, _simpson(fa, fm, fb, a, b), 0)]
    total = 0.0
    width = b - a
    overflowed = False
    while stack:
        lo, hi, flo, fmid, fhi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = _simpson(flo, flm, fmid, lo, mid)
        right = _simpson(fmid, frm, fhi, mid, hi)
        err = left + right - whole
        if abs(err) <= 15.0 * tol * (hi - lo) / width:
            total += left + right + err / 15.0
        elif depth >= max_depth:
            total += left + right
            overflowed = True
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, depth + 1))
    if overflowed:
        raise QuadratureError(f"depth cap {max_depth} reached", total)
    return total


def kl_between(post, prior_logpdf: Callable, grid, tol: float = 1e-7) -> float:
    """``int post(t) (log post(t) - log prior(t)) dt`` over the grid hull.

    ``post`` is a DensityEstimate or any callable density. Zero density
    contributes zero.
    """
    grid = np.asarray(grid, float)

    def integrand(t):
        q = float(post(t))
        if q <= 0.0:
            return 0.0
        lp = float(prior_logpdf(t))
        if lp == -math.inf:
            if q > 1e-12:
                raise DomainError(f"prior has no support at t={t} where the posterior does")
            return 0.0
        return q * (math.log(q) - lp)

    val = 0.0
    # integrate cell blocks so each panel stays smooth relative to the grid
    edges = np.linspace(grid[0], grid[-1], 9)
    for lo, hi in zip(edges[:-1], edges[1:]):
        val += adaptive_quad(integrand, float(lo), float(hi), tol / 8)
    if val < -1e-6:
        raise ArithmeticError(f"KL estimate {val} is negative beyond quadrature error")
    return max(val, 0.0)


def sandwich_omega(M: MomentMatrix, jac) -> np.ndarray:
    """``(G' V^{-1} G)^{-1}`` with ``V = n^{-1} sum g_i g_i'`` and ``G = jac``."""
    if not isinstance(M, MomentMatrix):
        M = MomentMatrix(M)
    G = np.atleast_2d(np.asarray(jac, float))
    V = M.second_moment()
    if np.linalg.matrix_rank(V) < V.shape[0]:
        raise np.linalg.LinAlgError("moment second-moment matrix is singular")
    info = G.T @ np.linalg.solve(V, G)
    omega = np.linalg.inv(info)
    return 0.5 * (omega + omega.T)
