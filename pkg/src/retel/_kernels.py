"""Compiled inner loops for the tilting duals.

Everything here works on plain arrays so it can be called from the public
wrappers in :mod:`retel.solver` and from the batched likelihood paths.

Objective for the exponential-tilting family (ETEL, WETEL, AETEL, RETEL)::

    F(lam) = log( sum_i w_i exp(lam' g_i) + tau exp(lam' mu + lam' S lam / 2) )

with the penalty term present only for RETEL. ``F`` is the log of the dual
objective, so it has the same minimizer; its gradient is the tilted moment
residual ``sum_i p_i g_i + p_c (mu + S lam)``.
"""

import numpy as np
from numba import njit

CONVERGED = 0
DIVERGED = 1
MAX_ITER = 2

_ARMIJO = 1e-4
_MAX_HALVINGS = 80


@njit(cache=True, nogil=True)
def hull_screen(G, logw):
    """Exact interior-hull test for p <= 2; returns True when p >= 3."""
    n, p = G.shape
    if p == 1:
        lo = np.inf
        hi = -np.inf
        for i in range(n):
            if logw[i] == -np.inf:
                continue
            v = G[i, 0]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        return lo < 0.0 < hi
    if p == 2:
        ang = np.empty(n)
        k = 0
        for i in range(n):
            if logw[i] == -np.inf:
                continue
            if G[i, 0] != 0.0 or G[i, 1] != 0.0:
                ang[k] = np.arctan2(G[i, 1], G[i, 0])
                k += 1
        if k < 3:
            return False
        a = np.sort(ang[:k])
        gap = a[0] + 2.0 * np.pi - a[k - 1]
        for i in range(1, k):
            d = a[i] - a[i - 1]
            if d > gap:
                gap = d
        return gap < np.pi - 1e-12
    return True


@njit(cache=True, nogil=True)
def _tilt_eval(G, logw, lam, pen, mu, S, logtau, want_hess, grad, hess):
    # returns F; fills grad (and hess when asked)
    n, p = G.shape
    a = np.empty(n)
    amax = -np.inf
    for i in range(n):
        s = logw[i]
        for j in range(p):
            s += G[i, j] * lam[j]
        a[i] = s
        if s > amax:
            amax = s
    sl = np.zeros(p)
    ac = -np.inf
    if pen:
        for j in range(p):
            acc = mu[j]
            for k in range(p):
                acc += S[j, k] * lam[k]
            sl[j] = acc
        q = 0.0
        for j in range(p):
            q += lam[j] * (mu[j] + 0.5 * (sl[j] - mu[j]))
        ac = logtau + q
        if ac > amax:
            amax = ac
    tot = 0.0
    e = np.empty(n)
    for i in range(n):
        e[i] = np.exp(a[i] - amax)
        tot += e[i]
    ec = 0.0
    if pen:
        ec = np.exp(ac - amax)
        tot += ec
    for j in range(p):
        grad[j] = 0.0
    for i in range(n):
        w = e[i] / tot
        for j in range(p):
            grad[j] += w * G[i, j]
    wc = ec / tot
    if pen:
        for j in range(p):
            grad[j] += wc * sl[j]
    if want_hess:
        for j in range(p):
            for k in range(p):
                hess[j, k] = 0.0
        for i in range(n):
            w = e[i] / tot
            if w == 0.0:
                continue
            for j in range(p):
                for k in range(p):
                    hess[j, k] += w * G[i, j] * G[i, k]
        if pen:
            for j in range(p):
                for k in range(p):
                    hess[j, k] += wc * (sl[j] * sl[k] + S[j, k])
        for j in range(p):
            for k in range(p):
                hess[j, k] -= grad[j] * grad[k]
    return amax + np.log(tot)


@njit(cache=True, nogil=True)
def _norm(v):
    s = 0.0
    for j in range(v.shape[0]):
        s += v[j] * v[j]
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def _newton_dir(H, g, d):
    # solves H d = -g; returns False when H is numerically singular
    p = g.shape[0]
    if p == 1:
        if not H[0, 0] > 0.0:
            return False
        d[0] = -g[0] / H[0, 0]
        return np.isfinite(d[0])
    if p == 2:
        det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
        scale = abs(H[0, 0] * H[1, 1]) + abs(H[0, 1] * H[1, 0])
        if not det > 1e-300 or not det > 1e-15 * scale:
            return False
        d[0] = -(H[1, 1] * g[0] - H[0, 1] * g[1]) / det
        d[1] = -(-H[1, 0] * g[0] + H[0, 0] * g[1]) / det
        return np.isfinite(d[0]) and np.isfinite(d[1])
    L = np.zeros((p, p))
    for j in range(p):
        s = H[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, p):
            t = H[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    y = np.empty(p)
    for i in range(p):
        t = -g[i]
        for k in range(i):
            t -= L[i, k] * y[k]
        y[i] = t / L[i, i]
    for i in range(p - 1, -1, -1):
        t = y[i]
        for k in range(i + 1, p):
            t -= L[k, i] * d[k]
        d[i] = t / L[i, i]
    for i in range(p):
        if not np.isfinite(d[i]):
            return False
    return True


@njit(cache=True, nogil=True)
def tilt_newton(G, logw, pen, mu, S, logtau, lam0, tol, max_iter, cap, shrink, screen, trace):
    """Damped Newton with Armijo backtracking on the log tilting dual.

    Returns ``(lam, status, iterations, grad_norm, F)``; ``trace`` receives
    the objective after each accepted step (length ``max_iter + 1``).
    """
    n, p = G.shape
    lam = lam0.copy()
    grad = np.empty(p)
    hess = np.empty((p, p))
    d = np.empty(p)
    trial = np.empty(p)
    gtrial = np.empty(p)
    dummy = np.empty((1, 1))
    for j in range(trace.shape[0]):
        trace[j] = np.nan
    if not pen and screen and p <= 2 and not hull_screen(G, logw):
        F = _tilt_eval(G, logw, lam, pen, mu, S, logtau, False, grad, dummy)
        return lam, DIVERGED, 0, _norm(grad), F
    F = _tilt_eval(G, logw, lam, pen, mu, S, logtau, True, grad, hess)
    trace[0] = F
    gn = _norm(grad)
    it = 0
    while it < max_iter:
        if gn <= tol:
            return lam, CONVERGED, it, gn, F
        ok = _newton_dir(hess, grad, d)
        if not ok:
            if pen:
                # ridge fallback; the penalized Hessian is positive definite
                for j in range(p):
                    hess[j, j] += 1e-12 + 1e-8 * abs(hess[j, j])
                ok = _newton_dir(hess, grad, d)
            if not ok:
                for j in range(p):
                    d[j] = -grad[j]
        dn = _norm(d)
        if not pen and dn > cap:
            for j in range(p):
                d[j] *= cap / dn
        slope = 0.0
        for j in range(p):
            slope += grad[j] * d[j]
        if slope >= 0.0:
            for j in range(p):
                d[j] = -grad[j]
            slope = -gn * gn
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            for j in range(p):
                trial[j] = lam[j] + t * d[j]
            Ft = _tilt_eval(G, logw, trial, pen, mu, S, logtau, False, gtrial, dummy)
            if Ft <= F + _ARMIJO * t * slope:
                accepted = True
                break
            # rounding-level plateau: accept if the residual still shrinks
            if Ft <= F + 4e-16 * (1.0 + abs(F)) and _norm(gtrial) < gn:
                accepted = True
                break
            t *= shrink
        it += 1
        if not accepted:
            return lam, MAX_ITER, it, gn, F
        for j in range(p):
            lam[j] = trial[j]
        F = _tilt_eval(G, logw, lam, pen, mu, S, logtau, True, grad, hess)
        trace[it] = F
        gn = _norm(grad)
        if not pen and gn > tol and _norm(lam) > cap:
            return lam, DIVERGED, it, gn, F
    if gn <= tol:
        return lam, CONVERGED, it, gn, F
    return lam, MAX_ITER, it, gn, F


@njit(cache=True, nogil=True)
def _el_eval(G, lam, want_hess, grad, hess):
    # f = -(1/n) sum log*(1 + lam'g_i), log* quadratic below 1/n
    n, p = G.shape
    eps = 1.0 / n
    f = 0.0
    for j in range(p):
        grad[j] = 0.0
    if want_hess:
        for j in range(p):
            for k in range(p):
                hess[j, k] = 0.0
    for i in range(n):
        z = 1.0
        for j in range(p):
            z += lam[j] * G[i, j]
        if z >= eps:
            f -= np.log(z)
            d1 = 1.0 / z
            d2 = 1.0 / (z * z)
        else:
            u = z / eps
            f -= np.log(eps) - 1.5 + 2.0 * u - 0.5 * u * u
            d1 = (2.0 - u) / eps
            d2 = 1.0 / (eps * eps)
        for j in range(p):
            grad[j] -= d1 * G[i, j]
        if want_hess:
            for j in range(p):
                for k in range(p):
                    hess[j, k] += d2 * G[i, j] * G[i, k]
    for j in range(p):
        grad[j] /= n
    if want_hess:
        for j in range(p):
            for k in range(p):
                hess[j, k] /= n
    return f / n


@njit(cache=True, nogil=True)
def el_newton(G, lam0, tol, max_iter, cap, shrink, screen, trace):
    """Newton for the Owen dual with the pseudo-log extension.

    Converged only when the extended minimizer keeps every ``1 + lam'g_i``
    above ``1/n``; otherwise the hull is violated and DIVERGED is returned.
    """
    n, p = G.shape
    lam = lam0.copy()
    grad = np.empty(p)
    hess = np.empty((p, p))
    d = np.empty(p)
    trial = np.empty(p)
    gtrial = np.empty(p)
    dummy = np.empty((1, 1))
    zero_w = np.zeros(n)
    for j in range(trace.shape[0]):
        trace[j] = np.nan
    if screen and p <= 2 and not hull_screen(G, zero_w):
        f = _el_eval(G, lam, False, grad, dummy)
        return lam, DIVERGED, 0, _norm(grad), f
    f = _el_eval(G, lam, True, grad, hess)
    trace[0] = f
    gn = _norm(grad)
    it = 0
    status = MAX_ITER
    while it < max_iter:
        if gn <= tol:
            status = CONVERGED
            break
        ok = _newton_dir(hess, grad, d)
        if not ok:
            for j in range(p):
                d[j] = -grad[j]
        slope = 0.0
        for j in range(p):
            slope += grad[j] * d[j]
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            for j in range(p):
                trial[j] = lam[j] + t * d[j]
            ft = _el_eval(G, trial, False, gtrial, dummy)
            if ft <= f + _ARMIJO * t * slope:
                accepted = True
                break
            if ft <= f + 4e-16 * (1.0 + abs(f)) and _norm(gtrial) < gn:
                accepted = True
                break
            t *= shrink
        it += 1
        if not accepted:
            break
        for j in range(p):
            lam[j] = trial[j]
        f = _el_eval(G, lam, True, grad, hess)
        trace[it] = f
        gn = _norm(grad)
        if _norm(lam) > cap:
            return lam, DIVERGED, it, gn, f
    if gn <= tol:
        status = CONVERGED
    if status == CONVERGED:
        for i in range(n):
            z = 1.0
            for j in range(p):
                z += lam[j] * G[i, j]
            if not z > 1.0 / n:
                return lam, DIVERGED, it, gn, f
    return lam, status, it, gn, f


@njit(cache=True, nogil=True)
def tilt_newton_batch(G3, logw, pen, MU, SS, logtau, tol, max_iter, cap, shrink, screen):
    """Solve ``B`` independent tilting duals; returns (lam, status, F)."""
    B, n, p = G3.shape
    lam = np.zeros((B, p))
    status = np.empty(B, np.int64)
    F = np.empty(B)
    lam0 = np.zeros(p)
    trace = np.empty(max_iter + 1)
    for b in range(B):
        lb, st, it, gn, fb = tilt_newton(
            G3[b], logw, pen, MU[b], SS[b], logtau, lam0, tol, max_iter, cap, shrink, screen, trace
        )
        lam[b] = lb
        status[b] = st
        F[b] = fb
    return lam, status, F


@njit(cache=True, nogil=True)
def el_newton_batch(G3, tol, max_iter, cap, shrink, screen):
    B, n, p = G3.shape
    lam = np.zeros((B, p))
    status = np.empty(B, np.int64)
    lam0 = np.zeros(p)
    trace = np.empty(max_iter + 1)
    for b in range(B):
        lb, st, it, gn, fb = el_newton(G3[b], lam0, tol, max_iter, cap, shrink, screen, trace)
        lam[b] = lb
        status[b] = st
    return lam, status


EL_CODE = 0
ETEL_CODE = 1
AETEL_CODE = 2
RETEL_F_CODE = 3
RETEL_R_CODE = 4


@njit(cache=True, nogil=True)
def rel_log_norm(A, b, tau, logtau, big):
    """``log((sum e^{a_i} + tau e^b) / (n + tau))``; exact 0 at ``A = 0, b = 0``."""
    n = A.shape[0]
    if big <= 0.5:
        s = 0.0
        for i in range(n):
            s += np.expm1(A[i])
        if tau > 0.0:
            s += tau * np.expm1(b)
        return np.log1p(s / (n + tau))
    m = A.max()
    if tau > 0.0:
        m = max(m, logtau + b)
    s = 0.0
    for i in range(n):
        s += np.exp(A[i] - m)
    if tau > 0.0:
        s += np.exp(logtau + b - m)
    return m + np.log(s) - np.log(n + tau)


@njit(cache=True, nogil=True)
def loglik_kernel(G, code, mu, S, logtau, a_n, tol, max_iter, cap, shrink):
    """``(log L, log R)`` of one moment matrix for the method ``code``."""
    n, p = G.shape
    trace = np.empty(max_iter + 1)
    lam0 = np.zeros(p)
    if code == EL_CODE:
        lam, st, it, gn, f = el_newton(G, lam0, tol, max_iter, cap, shrink, True, trace)
        if st != CONVERGED:
            return -np.inf, -np.inf
        log_r = 0.0
        for i in range(n):
            z = 1.0
            for j in range(p):
                z += lam[j] * G[i, j]
            log_r -= np.log(z)
        return log_r - n * np.log(n), log_r
    if code == AETEL_CODE:
        A = np.empty((n + 1, p))
        for j in range(p):
            s = 0.0
            for i in range(n):
                A[i, j] = G[i, j]
                s += G[i, j]
            A[n, j] = -(a_n / n) * s
        G = A
        n = n + 1
    pen = code == RETEL_F_CODE or code == RETEL_R_CODE
    logw = np.zeros(n)
    lam, st, it, gn, F = tilt_newton(G, logw, pen, mu, S, logtau, lam0, tol, max_iter, cap, shrink, True, trace)
    if st != CONVERGED:
        if pen:
            return np.nan, np.nan
        return -np.inf, -np.inf
    A = np.empty(n)
    sum_a = 0.0
    big = 0.0
    for i in range(n):
        a = 0.0
        for j in range(p):
            a += G[i, j] * lam[j]
        A[i] = a
        sum_a += a
        big = max(big, abs(a))
    sum_lp = sum_a - n * F
    b = 0.0
    tau = 0.0
    if pen:
        tau = np.exp(logtau)
        for j in range(p):
            acc = mu[j]
            for k in range(p):
                acc += 0.5 * S[j, k] * lam[k]
            b += lam[j] * acc
        big = max(big, abs(b))
    d = rel_log_norm(A, b, tau, logtau, big)
    if not pen:
        return sum_lp, sum_a - n * d
    if code == RETEL_R_CODE:
        return sum_lp, sum_a - n * d
    return sum_lp + logtau + b - F, sum_a + b - (n + 1) * d
