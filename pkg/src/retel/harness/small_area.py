"""Hierarchical small-area model with a bivariate moment likelihood.

Model, on standardized variables with sampling variance ``V = 1``::

    E[Y_i | theta_i] = theta_i,  Var[Y_i | theta_i] = V
    theta_i | beta, sigma2 ~ N(X_i' beta, sigma2)
    beta | sigma2 ~ N(beta0, g sigma2 (X'X)^{-1}),  beta0 = OLS, g = 0.1
    pi(sigma2) propto 1 / sigma2

The likelihood uses ``g_i = (Y_i - theta_i, (Y_i - theta_i)^2 / V - 1)``.
The sampler runs single-block random-walk Metropolis on
``(theta, beta, log sigma2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..inference import credible_interval, run_chains
from ..likelihood import Method, fast_loglik
from ..stats import normal_quantile_grid
from .config import ExperimentConfig
from .experiments import PSRF_LIMIT
from .rng import seed_sequence
from .table import ResultTable, qualify

COLUMNS = ("y", "x1", "x2")
G_PRIOR = 0.1
V = 1.0


class IngestionError(ValueError):
    """Bad input file; ``row`` is the 1-based file line, ``column`` the header name."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class AreaData:
    y: np.ndarray
    X: np.ndarray  # n x 2

    @property
    def n(self) -> int:
        return self.y.shape[0]


def read_areas(path) -> AreaData:
    """Parse a ``y,x1,x2`` CSV (extra columns are ignored)."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IngestionError(f"cannot open {path}: {e}") from None
    with fh:
        rd = csv.reader(fh)
        try:
            head = [h.strip() for h in next(rd)]
        except StopIteration:
            raise IngestionError("empty file", row=1) from None
        except UnicodeDecodeError as e:
            raise IngestionError(f"not UTF-8: {e}", row=1) from None
        idx = {}
        for c in COLUMNS:
            if c not in head:
                raise IngestionError(f"missing column {c!r}", row=1, column=c)
            idx[c] = head.index(c)
        vals = []
        line = 1
        try:
            for rec in rd:
                line += 1
                if not rec or all(not f.strip() for f in rec):
                    continue
                row = []
                for c in COLUMNS:
                    j = idx[c]
                    if j >= len(rec):
                        raise IngestionError(f"line {line}: missing value for {c!r}", row=line, column=c)
                    try:
                        v = float(rec[j])
                    except ValueError:
                        raise IngestionError(f"line {line}, column {c!r}: not a number: {rec[j]!r}", row=line, column=c) from None
                    if not math.isfinite(v):
                        raise IngestionError(f"line {line}, column {c!r}: non-finite value", row=line, column=c)
                    row.append(v)
                vals.append(row)
        except UnicodeDecodeError as e:
            raise IngestionError(f"not UTF-8: {e}", row=line + 1) from None
    if len(vals) < 3:
        raise IngestionError(f"need at least 3 areas, found {len(vals)}")
    A = np.array(vals)
    return AreaData(A[:, 0].copy(), A[:, 1:].copy())


def write_areas(path, data: AreaData):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(yi)), repr(float(xi[0])), repr(float(xi[1]))])


def standardize(a: np.ndarray) -> np.ndarray:
    """Column-wise zero mean, unit (n - 1) variance; constant columns are only centred."""
    a = np.asarray(a, float)
    sd = a.std(axis=0, ddof=1)
    return (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def synthetic_areas(rng: np.random.Generator, n: int = 51, beta=(1.0, 0.5), sigma: float = 0.3, noise: float = 0.3, rho: float = 0.5) -> AreaData:
    """Draw one dataset from the model on the raw scale.

    Covariates are correlated standard normals; ``theta = X beta + N(0, sigma^2)``
    and ``Y = theta + N(0, noise^2)``.
    """
    X = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], n)
    theta = X @ np.asarray(beta, float) + sigma * rng.standard_normal(n)
    y = theta + noise * rng.standard_normal(n)
    return AreaData(y, X)


def deviation_metrics(theta_hat, y) -> dict:
    """AAD, AARD, ASD and ASRD of estimates against the direct estimates ``y``."""
    theta_hat = np.asarray(theta_hat, float)
    y = np.asarray(y, float)
    d = theta_hat - y
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(d == 0, 0.0, d / y)
    return {
        "aad": float(np.mean(np.abs(d))),
        "aard": float(np.mean(np.abs(rel))),
        "asd": float(np.mean(d * d)),
        "asrd": float(np.mean(rel * rel)),
    }


def posterior_target(method: Method, y, X, tau: float | None = None):
    """Log posterior over ``z = (theta_1..theta_n, beta_1, beta_2, log sigma2)``."""
    n = y.shape[0]
    XtX = X.T @ X
    beta0 = np.linalg.solve(XtX, X.T @ y)
    k = X.shape[1]
    tau = math.log(n) if tau is None else tau
    def target(z):
        G = np.empty((n, 2))  # per call: chains may run on several threads
        th = z[:n]
        b = z[n : n + k]
        eta = z[n + k]
        s2 = math.exp(eta)
        r = y - th
        G[:, 0] = r
        G[:, 1] = r * r / V - 1.0
        if method.regularized:
            # sample-moments penalty
            ll = fast_loglik(method, G, mu=G.mean(axis=0), sigma=G.T @ G / (n - 1), tau=tau)[0]
        else:
            ll = fast_loglik(method, G)[0]
        if not ll > -math.inf:
            return -math.inf
        e = th - X @ b
        db = b - beta0
        # theta block, g-prior (with its sigma2 normalizer) and flat prior on eta = log sigma2
        return ll - 0.5 * (e @ e) / s2 - 0.5 * n * eta - 0.5 * (db @ XtX @ db) / (G_PRIOR * s2) - 0.5 * k * eta

    return target, beta0


def initial_states(y, X, beta0, chains: int):
    """Chain starts with residuals ``y - theta`` spread like N(0, V), so the hull condition holds."""
    n = y.shape[0]
    e = y - X @ beta0
    q = normal_quantile_grid(n) * math.sqrt(V)
    rank = np.argsort(np.argsort(e))
    r0 = q[rank]
    out = []
    for c in range(chains):
        th = y - r0 * (1.0 + 0.05 * c)
        s2 = max(float(np.var(th - X @ beta0)), 0.05)
        out.append(np.concatenate([th, beta0, [math.log(s2) + 0.25 * (c - (chains - 1) / 2)]]))
    return out


@dataclass
class AreaFit:
    method: Method
    theta_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    psrf_max: float
    acceptance: float
    metrics: dict

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.upper - self.lower))

    @property
    def warning(self) -> bool:
        return not self.psrf_max < PSRF_LIMIT


def fit_areas(data: AreaData, method, *, chains: int = 4, steps: int = 250000, seed=0, threads: int = 1, pilot=None) -> AreaFit:
    method = Method.parse(method)
    if method is Method.WETEL or method is Method.AETEL:
        raise ValueError(f"{method.value} is not offered for the small-area model")
    y = standardize(data.y)
    X = standardize(data.X)
    n = y.shape[0]
    target, beta0 = posterior_target(method, y, X)
    inits = initial_states(y, X, beta0, chains)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ps = run_chains(target, inits, steps, seed=ss, workers=threads, pilot=pilot or dict(rounds=6, steps=3000))
    draws = ps.pooled()[:, :n]
    med = np.median(draws, axis=0)
    ci = np.array([credible_interval(draws[:, i]) for i in range(n)])
    return AreaFit(
        method, med, ci[:, 0], ci[:, 1], float(np.max(ps.psrf)), float(ps.acceptance_rate.mean()), deviation_metrics(med, y)
    )


def run_small_area(csv_path, cfg: ExperimentConfig) -> ResultTable:
    data = read_areas(csv_path)
    n = data.n
    t = ResultTable("small_area")
    tau = cfg.tau_rule[0].value(n)
    for mi, m in enumerate(cfg.method_list):
        fit = fit_areas(data, m, chains=cfg.chains, steps=cfg.steps, seed=seed_sequence(cfg.seed, 0, 0, mi), threads=cfg.threads)
        kw = dict(n=n, tau=tau if m.regularized else None, method=m.value)
        for i in range(n):
            t.add(qualify("theta_hat", area=i + 1), fit.theta_hat[i], **kw)
            t.add(qualify("ci_lower", area=i + 1), fit.lower[i], **kw)
            t.add(qualify("ci_upper", area=i + 1), fit.upper[i], **kw)
        for k, v in fit.metrics.items():
            t.add(k, v, **kw)
        t.add("mean_length", fit.mean_length, **kw)
        t.add("psrf_max", fit.psrf_max, **kw)
        t.add("psrf_warning", float(fit.warning), **kw)
        t.add("acceptance", fit.acceptance, **kw)
    return t
