"""Simulation studies. Each runner maps a config to a ResultTable.

Replicates are independent: each gets its own Philox stream keyed by
``(seed, cell, rep)`` and all aggregation happens after the parallel map, in
replicate order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..inference import adaptive_grid_posterior, logistic_prior, monahan_boos_H, run_chains
from ..likelihood import Method, batch_loglik, fast_loglik, mean_model_curve
from ..model import MomentMatrix, PseudoData
from ..solver import solve_retel, solve_wetel
from ..stats import (
    cauchy_logpdf,
    chisq_cdf,
    kde,
    kl_between,
    ks_uniform,
    normal_logpdf,
    normal_quantile_grid,
    silverman_bandwidth,
)
from .config import ConfigError, ExperimentConfig
from .rng import seed_sequence, stream
from .table import ResultTable, qualify

__all__ = [
    "parallel_map",
    "run_uniformity",
    "run_coverage",
    "run_kl",
    "run_lambda_convergence",
    "run_logratio_curve",
    "run_wilks",
    "variant_gap_medians",
    "RUNNERS",
]

GRID_HALF_WIDTH = 6.0  # in units of max(1, s) / sqrt(n)
PSRF_LIMIT = 1.1


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map; ``threads > 1`` uses a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _require(cfg: ExperimentConfig, name: str):
    if cfg.experiment != name:
        raise ConfigError(f"config is for {cfg.experiment!r}, runner is {name!r}")


def _se(x) -> float:
    x = np.asarray(x, float)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")


def _variants(cfg: ExperimentConfig):
    """``(method, tau_rule)`` pairs; only regularized methods vary with tau."""
    out = []
    for m in cfg.method_list:
        if m is Method.WETEL:
            raise ConfigError("WETEL has no mean-model study here; use lambda_convergence")
        if m.regularized:
            out.extend((m, r) for r in cfg.tau_rule)
        else:
            out.append((m, None))
    return out


def _grid_posterior(method, x, prior, tau, points, s):
    n = x.shape[0]
    xbar = float(x.mean())
    hw = GRID_HALF_WIDTH * max(1.0, s) / math.sqrt(n)

    def logpost(grid):
        ll = mean_model_curve(method, x, grid, tau=tau)[0]
        return prior(grid) + ll

    return adaptive_grid_posterior(logpost, xbar - hw, xbar + hw, points)


def _mean_model_study(cfg, rep_fn):
    cells = [(n, s, l) for n in cfg.n_values for s in cfg.s_values for l in cfg.l_values]
    variants = _variants(cfg)
    jobs = [(ci, r) for ci in range(len(cells)) for r in range(cfg.reps)]
    res = parallel_map(lambda job: rep_fn(cells[job[0]], variants, stream(cfg.seed, job[0], job[1])), jobs, cfg.threads)
    per_cell = [res[ci * cfg.reps : (ci + 1) * cfg.reps] for ci in range(len(cells))]
    return cells, variants, per_cell


def run_uniformity(cfg: ExperimentConfig) -> ResultTable:
    """Monahan-Boos H under theta ~ Logistic(l, s), X | theta ~ N(theta, 1)."""
    _require(cfg, "uniformity")

    def rep(cell, variants, rng):
        n, s, l = cell
        theta = l + s * rng.logistic()
        x = theta + rng.standard_normal(n)
        prior = logistic_prior(l, s)
        out = []
        for m, rule in variants:
            tau = rule.value(n) if rule else None
            gp = _grid_posterior(m, x, prior, tau, cfg.grid_points, s)
            out.append(monahan_boos_H(gp, theta))
        return out

    cells, variants, per_cell = _mean_model_study(cfg, rep)
    t = ResultTable("uniformity")
    for (n, s, l), rows in zip(cells, per_cell):
        H = np.array(rows)
        for j, (m, rule) in enumerate(variants):
            tau = rule.value(n) if rule else None
            ks = ks_uniform(H[:, j])
            kw = dict(n=n, s=s, l=l, tau=tau, method=m.value)
            t.add("ks_stat", ks.statistic, **kw)
            t.add("ks_pvalue", ks.p_value, **kw)
            for i, h in enumerate(np.sort(H[:, j])):
                t.add(qualify("h_sorted", i=i), h, **kw)
        t.add(qualify("meta_grid", points=cfg.grid_points, half_width="6max(1;s)/sqrt(n)", tail="1e-06"), cfg.grid_points, n=n, s=s, l=l)
    return t


def run_coverage(cfg: ExperimentConfig) -> ResultTable:
    """Central 95% credible intervals at theta0 = 0 under a Logistic(l, s) prior."""
    _require(cfg, "coverage")

    def rep(cell, variants, rng):
        n, s, l = cell
        x = rng.standard_normal(n)
        prior = logistic_prior(l, s)
        out = []
        for m, rule in variants:
            tau = rule.value(n) if rule else None
            lo, hi = _grid_posterior(m, x, prior, tau, cfg.grid_points, s).interval(0.95)
            out.append((float(lo <= 0.0 <= hi), hi - lo))
        return out

    cells, variants, per_cell = _mean_model_study(cfg, rep)
    t = ResultTable("coverage")
    for (n, s, l), rows in zip(cells, per_cell):
        A = np.array(rows)  # reps x variants x 2
        for j, (m, rule) in enumerate(variants):
            kw = dict(n=n, s=s, l=l, tau=rule.value(n) if rule else None, method=m.value)
            t.add("cr_percent", 100 * A[:, j, 0].mean(), 100 * _se(A[:, j, 0]), **kw)
            t.add("length", A[:, j, 1].mean(), _se(A[:, j, 1]), **kw)
    return t


# hierarchical Cauchy model: theta_i | mu ~ Cauchy(mu, 1), mu ~ N(0, 10^2)
KL_THETA = (-3.0, 3.0)
KL_PRIOR_SD = 10.0


def kl_target(method: Method, groups, tau: float):
    """Log posterior of ``(theta1, theta2, mu)`` with one mean-model likelihood per group."""
    groups = [np.ascontiguousarray(g, dtype=float) for g in groups]
    sig = np.ones((1, 1))

    def target(z):
        t1, t2, mu = z
        lp = -0.5 * (mu / KL_PRIOR_SD) ** 2 + cauchy_logpdf(t1, mu) + cauchy_logpdf(t2, mu)
        for x, th in zip(groups, (t1, t2)):
            r = x - th
            # invariant-mean penalty: mu = xbar - theta, Sigma = 1
            ll = fast_loglik(method, r, mu=[r.mean()], sigma=sig, tau=tau)[0] if method.regularized else fast_loglik(method, r)[0]
            lp += ll
        return float(lp) if lp == lp else -math.inf

    return target


def kl_replicate(method: Method, n: int, rng_data, seed_chain, chains: int, steps: int, tau_rule):
    """One EKL replicate; returns ``(kl, max psrf, mean acceptance, mu draws)``."""
    groups = [th + rng_data.standard_normal(n) for th in KL_THETA]
    tau = 1.0 if n == 2 else tau_rule.value(n)
    target = kl_target(method, groups, tau)
    m = [float(g.mean()) for g in groups]
    centre = 0.5 * (m[0] + m[1])
    offsets = np.linspace(-2.0, 2.0, chains)
    inits = [np.array([m[0], m[1], centre + o]) for o in offsets]
    ps = run_chains(target, inits, steps, seed=seed_chain)
    mu = ps.pooled()[:, 2]
    h = silverman_bandwidth(mu)
    grid = np.linspace(mu.min() - 6 * h, mu.max() + 6 * h, 512)
    dens = kde(mu, grid)
    kl = kl_between(dens, lambda t: normal_logpdf(t, 0.0, KL_PRIOR_SD), grid)
    return kl, float(np.max(ps.psrf)), float(ps.acceptance_rate.mean()), dens


def run_kl(cfg: ExperimentConfig) -> ResultTable:
    """Expected KL from the N(0, 100) prior to the posterior of mu."""
    _require(cfg, "kl")
    methods = cfg.method_list
    for m in methods:
        if m is Method.WETEL:
            raise ConfigError("WETEL is not part of the KL study")
    rule = cfg.tau_rule[0]
    jobs = [(ci, n, mi, m, r) for ci, n in enumerate(cfg.n_values) for mi, m in enumerate(methods) for r in range(cfg.reps)]

    def one(job):
        ci, n, mi, m, r = job
        # data stream shared across methods so comparisons are paired
        return kl_replicate(m, n, stream(cfg.seed, ci, r), seed_sequence(cfg.seed, ci, r, 1 + mi), cfg.chains, cfg.steps, rule)

    res = parallel_map(one, jobs, cfg.threads)
    t = ResultTable("kl")
    k = 0
    for ci, n in enumerate(cfg.n_values):
        tau = 1.0 if n == 2 else rule.value(n)
        for m in methods:
            block = res[k : k + cfg.reps]
            k += cfg.reps
            kls = np.array([b[0] for b in block])
            psrf = np.array([b[1] for b in block])
            kw = dict(n=n, tau=tau, method=m.value)
            t.add("ekl", kls.mean(), _se(kls), **kw)
            t.add("psrf_mean", psrf.mean(), _se(psrf), **kw)
            t.add("psrf_warning", float(psrf.mean() > PSRF_LIMIT), **kw)
            t.add("acceptance", np.mean([b[2] for b in block]), **kw)
            if cfg.emit_density:
                d = block[0][3]
                for g, v in zip(d.grid[::4], d.values[::4]):
                    t.add(qualify("density", mu=float(g)), v, **kw)
    return t


LAMBDA_DATA = (-2.0, 2.0)


def lambda_pair(theta: float, m: int):
    """``(lambda_WET, lambda_RET)`` for the two-point data at ``theta``."""
    M = MomentMatrix(np.array(LAMBDA_DATA) - theta)
    pseudo = PseudoData(normal_quantile_grid(m))
    wet = solve_wetel(M, pseudo)
    ret = solve_retel(M, None, penalty=(np.zeros(1), np.ones((1, 1)), 0.0))
    lw = float(wet.lam[0]) if wet.converged else float("nan")
    return lw, float(ret.lam[0])


def run_lambda_convergence(cfg: ExperimentConfig) -> ResultTable:
    """WETEL multipliers with ``m = 2^k`` quantile pseudo-points versus RETEL (mu=0, Sigma=1, tau=1)."""
    _require(cfg, "lambda_convergence")
    t = ResultTable("lambda_convergence")
    for theta in cfg.theta_values:
        lr = None
        for k in range(1, cfg.m_max + 1):
            m = 2**k
            lw, lr = lambda_pair(theta, m)
            t.add(qualify("lambda_wet", theta=theta, m=m), lw, tau=1.0, method="WETEL")
            t.add(qualify("gap", theta=theta, m=m), abs(lw - lr), tau=1.0, method="WETEL")
        t.add(qualify("lambda_ret", theta=theta), lr, tau=1.0, method="RETEL_f")
    return t


def run_logratio_curve(cfg: ExperimentConfig) -> ResultTable:
    """Both RETEL log-ratios for the single observation 0, penalty mean -theta."""
    _require(cfg, "logratio_curve")
    thetas = np.linspace(-3.0, 3.0, cfg.grid_points)
    t = ResultTable("logratio_curve")
    for rule in cfg.tau_rule:
        tau = rule.value(1)
        f = mean_model_curve(Method.RETEL_F, [0.0], thetas, tau=tau, preset="figure2")[1]
        r = mean_model_curve(Method.RETEL_R, [0.0], thetas, tau=tau, preset="figure2")[1]
        for th, a, b in zip(thetas, f, r):
            t.add(qualify("log_ratio", theta=float(th)), a, n=1, tau=tau, method="RETEL_f")
            t.add(qualify("log_ratio", theta=float(th)), b, n=1, tau=tau, method="RETEL_r")
        t.add("max_gap", float(np.max(np.abs(f - r))), n=1, tau=tau, method="RETEL_f")
    return t


def _stat_at_zero(method, x, tau):
    return -2.0 * mean_model_curve(method, x, [0.0], tau=tau)[1][0]


def run_wilks(cfg: ExperimentConfig) -> ResultTable:
    """KS distance of ``-2 log R(theta0)`` from chi-square(1), data N(0, 1)."""
    _require(cfg, "wilks")
    variants = _variants(cfg)
    jobs = [(ci, n, r) for ci, n in enumerate(cfg.n_values) for r in range(cfg.reps)]

    def one(job):
        ci, n, r = job
        x = stream(cfg.seed, ci, r).standard_normal(n)
        return [_stat_at_zero(m, x, rule.value(n) if rule else None) for m, rule in variants]

    res = parallel_map(one, jobs, cfg.threads)
    t = ResultTable("wilks")
    for ci, n in enumerate(cfg.n_values):
        S = np.array(res[ci * cfg.reps : (ci + 1) * cfg.reps])
        for j, (m, rule) in enumerate(variants):
            u = np.where(np.isfinite(S[:, j]), chisq_cdf(np.where(np.isfinite(S[:, j]), S[:, j], 0.0), 1), 1.0)
            ks = ks_uniform(u)
            kw = dict(n=n, tau=rule.value(n) if rule else None, method=m.value)
            t.add("ks_stat", ks.statistic, **kw)
            t.add("ks_pvalue", ks.p_value, **kw)
            t.add("hull_violations", float(np.sum(~np.isfinite(S[:, j]))), **kw)
    return t


def variant_gap_medians(ns, reps: int, seed: int = 0, mu=None, sigma: float = 1.0, threads: int = 1):
    """Median ``|log R_f - log R_r|`` at theta0 = 0 with tau = log n, data N(0, 1).

    ``mu=None`` uses the invariant-mean penalty (``xbar - theta``); a number
    fixes the penalty mean.
    """
    out = []
    for ci, n in enumerate(ns):
        X = np.stack(parallel_map(lambda r: stream(seed, ci, r).standard_normal(n), range(reps), threads))
        G3 = X[:, :, None]
        m = X.mean(axis=1) if mu is None else np.full(reps, float(mu))
        kw = dict(mu=m, sigma=np.full(reps, float(sigma)), tau=math.log(n))
        f = batch_loglik(Method.RETEL_F, G3, **kw)[1]
        r = batch_loglik(Method.RETEL_R, G3, **kw)[1]
        out.append(float(np.median(np.abs(f - r))))
    return out


def _small_area(cfg):
    from .small_area import run_small_area

    if cfg.data_path is None:
        raise ConfigError("small_area needs data_path")
    return run_small_area(cfg.data_path, cfg)


RUNNERS = {
    "uniformity": run_uniformity,
    "coverage": run_coverage,
    "kl": run_kl,
    "lambda_convergence": run_lambda_convergence,
    "logratio_curve": run_logratio_curve,
    "wilks": run_wilks,
    "small_area": _small_area,
}
