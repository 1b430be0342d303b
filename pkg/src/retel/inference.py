"""Priors, posteriors on grids, random-walk Metropolis and chain diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .stats import cauchy_logpdf, logistic_logpdf

__all__ = [
    "Prior",
    "logistic_prior",
    "normal_prior",
    "g_prior",
    "improper_inv_var",
    "cauchy_prior",
    "log_posterior",
    "Chain",
    "PosteriorSamples",
    "InitializationError",
    "rwmh",
    "pilot_scales",
    "run_chains",
    "split_psrf",
    "credible_interval",
    "GridPosterior",
    "EmptyPosteriorError",
    "grid_posterior",
    "adaptive_grid_posterior",
    "monahan_boos_H",
]


@dataclass(frozen=True)
class Prior:
    """A prior with a vectorized ``log_density``.

    ``kind`` is one of ``logistic``, ``normal``, ``gprior``, ``inv_var``,
    ``cauchy``; ``params`` holds its parameters.
    """

    kind: str
    params: dict
    log_density: Callable = field(repr=False)

    def __call__(self, theta):
        return self.log_density(theta)


def logistic_prior(loc: float, scale: float) -> Prior:
    if not scale > 0:
        raise ValueError("logistic scale must be positive")
    return Prior("logistic", {"l": loc, "s": scale}, lambda t: logistic_logpdf(t, loc, scale))


def normal_prior(mean, cov) -> Prior:
    """Multivariate normal; scalar ``mean`` and ``cov`` give the 1-d case."""
    mean = np.atleast_1d(np.asarray(mean, float))
    cov = np.atleast_2d(np.asarray(cov, float))
    L = np.linalg.cholesky(cov)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    d = mean.shape[0]
    const = -0.5 * (d * math.log(2 * math.pi) + logdet)

    def logpdf(t):
        t = np.asarray(t, float)
        if d == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            z = (t - mean[0]) / L[0, 0]
            return const - 0.5 * z * z
        r = np.linalg.solve(L, (t - mean).T)
        return const - 0.5 * (r * r).sum(axis=0)

    return Prior("normal", {"mean": mean, "cov": cov}, logpdf)


def g_prior(beta0, g: float, xtx_inv) -> Prior:
    """Zellner's prior ``beta | sigma2 ~ N(beta0, g sigma2 (X'X)^{-1})``.

    ``log_density`` takes ``(beta, sigma2)``.
    """
    beta0 = np.asarray(beta0, float)
    xtx_inv = np.asarray(xtx_inv, float)
    prec = np.linalg.inv(xtx_inv)
    k = beta0.shape[0]
    _, logdet = np.linalg.slogdet(xtx_inv)

    def logpdf(beta, sigma2):
        if not sigma2 > 0:
            return -math.inf
        r = np.asarray(beta, float) - beta0
        v = g * sigma2
        return -0.5 * (k * math.log(2 * math.pi * v) + logdet + r @ prec @ r / v)

    return Prior("gprior", {"beta0": beta0, "g": g, "xtx_inv": xtx_inv}, logpdf)


def improper_inv_var() -> Prior:
    """``pi(sigma2) propto 1 / sigma2``."""

    def logpdf(s2):
        s2 = np.asarray(s2, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s2 > 0, -np.log(np.where(s2 > 0, s2, 1.0)), -np.inf)
        return out if out.ndim else float(out)

    return Prior("inv_var", {}, logpdf)


def cauchy_prior(loc: float, scale: float) -> Prior:
    return Prior("cauchy", {"loc": loc, "scale": scale}, lambda t: cauchy_logpdf(t, loc, scale))


def log_posterior(prior, loglik_fn, theta) -> float:
    """``log pi(theta) + log L(theta)``; ``-inf`` if either is."""
    lp = float(prior(theta)) if prior is not None else 0.0
    if lp == -math.inf:
        return -math.inf
    ll = loglik_fn(theta)
    ll = getattr(ll, "log_l", ll)
    if ll == -math.inf:
        return -math.inf
    return lp + float(ll)


class InitializationError(ValueError):
    pass


@dataclass
class Chain:
    draws: np.ndarray  # steps x dim
    accepted: int
    log_target: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / max(1, self.draws.shape[0])


def rwmh(target: Callable, init, steps: int, proposal_scale, rng: np.random.Generator) -> Chain:
    """Random-walk Metropolis with Gaussian increments.

    ``proposal_scale`` is a scalar, a per-coordinate vector, or a ``d x d``
    lower-triangular factor ``L`` giving increments ``L z``.
    """
    x = np.atleast_1d(np.asarray(init, float)).copy()
    d = x.shape[0]
    ps = np.asarray(proposal_scale, float)
    lp = float(target(x))
    if not lp > -math.inf:
        raise InitializationError("target is -inf at the initial point")
    draws = np.empty((steps, d))
    lps = np.empty(steps)
    acc = 0
    z = rng.standard_normal((steps, d))
    noise = z @ ps.T if ps.ndim == 2 else z * np.broadcast_to(ps, (d,))
    logu = np.log(rng.random(steps))
    for t in range(steps):
        y = x + noise[t]
        lq = float(target(y))
        if logu[t] < lq - lp:
            x, lp = y, lq
            acc += 1
        draws[t] = x
        lps[t] = lp
    return Chain(draws, acc, lps)


def pilot_scales(
    target: Callable, init, rng: np.random.Generator, rounds: int = 4, steps: int = 400, start_scale=None
):
    """Estimate proposal scales from a short adaptive warm phase.

    Returns ``(scales, last_state)``; the pilot draws themselves are discarded.
    Scales are ``2.4 / sqrt(d)`` times the running posterior sd estimate.
    """
    x = np.atleast_1d(np.asarray(init, float))
    d = x.shape[0]
    base = 2.4 / math.sqrt(d)
    scale = np.full(d, 0.1) if start_scale is None else np.broadcast_to(np.asarray(start_scale, float), (d,)).copy()
    for r in range(rounds):
        ch = rwmh(target, x, steps, scale, rng)
        x = ch.draws[-1]
        sd = ch.draws[steps // 2 :].std(axis=0)
        rate = ch.acceptance_rate
        # a chain that barely moved gives no sd information: shrink or grow blindly
        fresh = np.where(sd > 1e-12, base * sd, scale * (0.5 if rate < 0.05 else 2.0))
        if rate < 0.05:
            fresh = np.minimum(fresh, scale * 0.5)
        scale = fresh
    return scale, x


def split_psrf(draws) -> np.ndarray:
    """Split-chain Gelman-Rubin factor per coordinate.

    ``draws`` is ``chains x steps x dim`` (already past burn-in); each chain
    is cut into two halves before the between/within comparison.
    """
    draws = np.asarray(draws, float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    k, s, d = draws.shape
    L = s // 2
    if L < 2:
        raise ValueError("chains too short for split R-hat")
    seqs = np.concatenate([draws[:, :L], draws[:, s - L :]], axis=0)
    means = seqs.mean(axis=1)
    B = L * means.var(axis=0, ddof=1)
    W = seqs.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (L - 1) / L * W + B / L
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_plus / W)
    return np.where(W > 0, r, np.where(B > 0, np.inf, 1.0))


@dataclass
class PosteriorSamples:
    draws: np.ndarray  # chains x steps x dim, full chains
    acceptance_rate: np.ndarray
    psrf: np.ndarray
    burn_in: int
    scales: np.ndarray | None = None

    def kept(self) -> np.ndarray:
        """Post-burn-in draws, ``chains x (steps - burn_in) x dim``."""
        return self.draws[:, self.burn_in :]

    def pooled(self) -> np.ndarray:
        k = self.kept()
        return k.reshape(-1, k.shape[-1])


def run_chains(
    target: Callable,
    inits: Sequence,
    steps: int,
    scales=None,
    seed: int | np.random.SeedSequence = 0,
    burn_in: int | None = None,
    workers: int = 1,
    pilot: dict | None = None,
) -> PosteriorSamples:
    """Run ``len(inits)`` independent chains, each on its own RNG sub-stream.

    With ``scales=None`` each chain tunes its proposal in a discarded pilot
    phase (see :func:`pilot_scales`); ``pilot`` forwards keyword arguments.
    """
    k = len(inits)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = ss.spawn(k)
    for j, x0 in enumerate(inits):
        if not float(target(np.atleast_1d(np.asarray(x0, float)))) > -math.inf:
            raise InitializationError(f"chain {j}: target is -inf at its initial point")

    def one(j):
        rng = np.random.Generator(np.random.Philox(streams[j]))
        x0 = inits[j]
        sc = scales
        if sc is None:
            sc, x0 = pilot_scales(target, x0, rng, **(pilot or {}))
        sc = np.asarray(sc, float)
        return rwmh(target, x0, steps, sc, rng), sc if sc.ndim == 2 else np.broadcast_to(sc, (np.size(x0),))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, range(k)))
    else:
        out = [one(j) for j in range(k)]
    draws = np.stack([c.draws for c, _ in out])
    acc = np.array([c.acceptance_rate for c, _ in out])
    b = steps // 2 if burn_in is None else burn_in
    psrf = split_psrf(draws[:, b:]) if steps - b >= 4 else np.full(draws.shape[-1], np.nan)
    return PosteriorSamples(draws, acc, psrf, b, np.stack([s for _, s in out]))


def credible_interval(samples, level: float = 0.95):
    """Equal-tailed interval from linearly interpolated order statistics."""
    x = np.asarray(samples, float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2], method="linear")
    return float(lo), float(hi)


class EmptyPosteriorError(ValueError):
    pass


@dataclass(frozen=True)
class GridPosterior:
    grid: np.ndarray
    density: np.ndarray

    def cdf_values(self) -> np.ndarray:
        g, f = self.grid, self.density
        c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(g))])
        return c / c[-1]

    def cdf(self, t):
        return np.interp(t, self.grid, self.cdf_values(), left=0.0, right=1.0)

    def quantile(self, q):
        c = self.cdf_values()
        # collapse flat stretches so the inverse is single-valued
        keep = np.concatenate([[True], np.diff(c) > 0])
        return np.interp(q, c[keep], self.grid[keep])

    def interval(self, level: float = 0.95):
        lo, hi = self.quantile([(1 - level) / 2, (1 + level) / 2])
        return float(lo), float(hi)

    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.density, self.grid))

    def sd(self) -> float:
        m = self.mean()
        return float(math.sqrt(np.trapezoid((self.grid - m) ** 2 * self.density, self.grid)))

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def _normalize(grid, logpost):
    if not np.all(np.diff(grid) > 0) or grid.shape[0] < 3:
        raise ValueError("grid must be strictly increasing with at least 3 points")
    if not np.any(np.isfinite(logpost)):
        raise EmptyPosteriorError("posterior is -inf on the whole grid")
    w = np.exp(logpost - np.max(logpost[np.isfinite(logpost)]))
    w[~np.isfinite(logpost)] = 0.0
    return w / np.trapezoid(w, grid)


def grid_posterior(prior, loglik_fn, grid) -> GridPosterior:
    """Posterior density on ``grid``; ``loglik_fn`` maps the grid array to log-likelihoods."""
    grid = np.asarray(grid, float)
    ll = np.asarray(loglik_fn(grid), float)
    lp = np.asarray(prior(grid), float) if prior is not None else 0.0
    return GridPosterior(grid, _normalize(grid, lp + ll))


def adaptive_grid_posterior(logpost_fn, lo: float, hi: float, points: int = 2001, tail: float = 1e-6, max_doublings: int = 12) -> GridPosterior:
    """Grid posterior whose range grows until each edge tail holds < ``tail`` mass.

    The edge tail is the mass in the outermost 1% of the grid on that side.
    Widening keeps the spacing fixed, so the point count grows with the range.
    """
    h = (hi - lo) / (points - 1)
    for _ in range(max_doublings + 1):
        grid = np.linspace(lo, hi, int(round((hi - lo) / h)) + 1)
        dens = _normalize(grid, np.asarray(logpost_fn(grid), float))
        c = GridPosterior(grid, dens).cdf_values()
        k = max(2, grid.shape[0] // 100)
        left, right = c[k], 1.0 - c[-1 - k]
        if left < tail and right < tail:
            break
        w = hi - lo
        if left >= tail:
            lo -= w / 2
        if right >= tail:
            hi += w / 2
    return GridPosterior(grid, dens)


def monahan_boos_H(gp: GridPosterior, theta_true: float) -> float:
    """Posterior CDF at the generating parameter."""
    return float(gp.cdf(theta_true))
