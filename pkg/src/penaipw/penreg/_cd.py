"""Compiled coordinate-descent kernels.

Both kernels work on standardized columns and update ``beta`` in place.
Penalty kinds: 0 = elastic net (covers none and l1), 1 = SCAD, 2 = MCP.
Coordinates with ``free[j] == False`` are never touched and stay at zero.
"""

import numpy as np
from numba import njit

from .thresholds import _mcp, _scad, _soft, mcp_penalty, scad_penalty

KIND_EN = 0
KIND_SCAD = 1
KIND_MCP = 2


@njit(cache=True)
def _update(z, v, l1, l2, kind, param):
    if kind == KIND_EN:
        return _soft(z, l1) / (v + l2)
    if kind == KIND_SCAD:
        return _scad(z / v, l1, param)
    return _mcp(z / v, l1, param)


@njit(cache=True)
def _penalty_value(beta, l1, l2, free, kind, param):
    tot = 0.0
    for j in range(beta.shape[0]):
        if not free[j] or beta[j] == 0.0:
            continue
        if kind == KIND_EN:
            tot += l1[j] * abs(beta[j]) + 0.5 * l2[j] * beta[j] * beta[j]
        elif kind == KIND_SCAD:
            tot += scad_penalty(beta[j], l1[j], param)
        else:
            tot += mcp_penalty(beta[j], l1[j], param)
    return tot


@njit(cache=True)
def gaussian_objective(X, y, beta, l1, l2, free, kind, param):
    n = X.shape[0]
    rss = 0.0
    for i in range(n):
        e = y[i]
        for j in range(X.shape[1]):
            if beta[j] != 0.0:
                e -= X[i, j] * beta[j]
        rss += e * e
    return 0.5 * rss / n + _penalty_value(beta, l1, l2, free, kind, param)


@njit(cache=True)
def _gauss_sweep(G, g, beta, l1, l2, kind, param, idx, m, upd, m_upd):
    """One pass over ``idx``; the gradient ``g`` is kept current on ``upd``."""
    maxd = 0.0
    for t in range(m):
        j = idx[t]
        b = beta[j]
        v = G[j, j]
        new = _update(g[j] + v * b, v, l1[j], l2[j], kind, param)
        d = new - b
        if d != 0.0:
            beta[j] = new
            for u in range(m_upd):
                k = upd[u]
                g[k] -= G[j, k] * d
            if abs(d) > maxd:
                maxd = abs(d)
    return maxd


@njit(cache=True)
def _gram_objective(G, c, beta, l1, l2, free, kind, param):
    q = 0.0
    p = beta.shape[0]
    for j in range(p):
        if beta[j] == 0.0:
            continue
        s = 0.0
        for k in range(p):
            if beta[k] != 0.0:
                s += G[j, k] * beta[k]
        q += beta[j] * (0.5 * s - c[j])
    return q + _penalty_value(beta, l1, l2, free, kind, param)


@njit(cache=True)
def _solve(A, b):
    """Solve ``A x = b``; None when ``A`` is singular or the result non-finite."""
    try:
        x = np.linalg.solve(A, b)
    except Exception:
        return None
    for v in x:
        if not np.isfinite(v):
            return None
    return x


@njit(cache=True)
def _region(b, lam, kind, param):
    """Penalty derivative on the region containing ``b`` as ``q + r * b``.

    Returns (q, r, region id); region ids let a candidate solution be checked
    against the pattern it was solved under.
    """
    s = 1.0 if b > 0 else -1.0
    ab = abs(b)
    if kind == KIND_SCAD:
        if ab <= lam:
            return lam * s, 0.0, 0
        if ab <= param * lam:
            return param * lam * s / (param - 1.0), -1.0 / (param - 1.0), 1
        return 0.0, 0.0, 2
    # MCP
    if ab <= param * lam:
        return lam * s, -1.0 / param, 0
    return 0.0, 0.0, 2


@njit(cache=True)
def _polish(G, c, g, beta, l1, l2, free, kind, param, act_in, m_in, all_idx, m_all):
    """Solve the stationarity equations on the current support exactly.

    For the elastic net, coordinates whose solved value changes sign are
    dropped and the system re-solved (up to four times). The candidate is
    accepted only when active coefficients keep their signs (and, for SCAD and
    MCP, their penalty regions), every inactive coordinate satisfies its zero
    condition, and the objective does not increase.

    Returns 0 when ``beta``/``g`` were replaced, 2 when the candidate failed
    only because an inactive coordinate wants to enter, 1 otherwise.
    """
    if m_in == 0:
        return 1
    act = act_in[:m_in].copy()
    m_act = m_in
    sol = np.empty(0)
    ok = False
    for attempt in range(4):
        A = np.empty((m_act, m_act))
        rhs = np.empty(m_act)
        regions = np.empty(m_act, np.int64)
        for a in range(m_act):
            j = act[a]
            for b in range(m_act):
                A[a, b] = G[j, act[b]]
            if kind == KIND_EN:
                sgn = 1.0 if beta[j] > 0 else -1.0
                A[a, a] += l2[j]
                rhs[a] = c[j] - l1[j] * sgn
                regions[a] = 0
            else:
                q, r, reg = _region(beta[j], l1[j], kind, param)
                A[a, a] += r
                rhs[a] = c[j] - q
                regions[a] = reg
        res = _solve(A, rhs)
        if res is None:
            return 1
        sol = res
        keep = np.ones(m_act, np.bool_)
        n_drop = 0
        for a in range(m_act):
            j = act[a]
            if l1[j] == 0.0 and l2[j] == 0.0:
                continue
            if sol[a] == 0.0 or (sol[a] > 0) != (beta[j] > 0):
                keep[a] = False
                n_drop += 1
            elif kind != KIND_EN:
                _, _, reg = _region(sol[a], l1[j], kind, param)
                if reg != regions[a]:
                    return 1
        if n_drop == 0:
            ok = True
            break
        if kind != KIND_EN:
            return 1
        act = act[keep]
        m_act = act.shape[0]
        if m_act == 0:
            return 1
    if not ok:
        return 1
    p = beta.shape[0]
    cand = np.zeros(p)
    for a in range(m_act):
        cand[act[a]] = sol[a]
    gc = c - G @ cand
    for t in range(m_all):
        j = all_idx[t]
        if cand[j] == 0.0 and abs(gc[j]) > l1[j]:
            return 2
    if _gram_objective(G, c, cand, l1, l2, free, kind, param) > \
            _gram_objective(G, c, beta, l1, l2, free, kind, param):
        return 1
    beta[:] = cand
    g[:] = gc
    return 0


@njit(cache=True)
def gaussian_cd(G, c, beta, l1, l2, free, kind, param, tol, max_sweeps,
                X, y, record, eager=False):
    """Penalized least squares on a Gram matrix ``G = X'X/n``, ``c = X'y/n``.

    Active-set cycling: one full sweep, then sweeps over the nonzero
    coordinates until they settle, repeated until a full sweep moves no
    coefficient by more than ``tol``. Once the active sweeps are within
    ``1e-3`` and CD has run about as long as a direct solve would take, the
    support is polished by that solve, retried with a doubling sweep interval
    while it keeps failing. With ``record`` set, the objective
    (needs the raw ``X``, ``y``) is stored after every sweep and polish.
    Returns ``(sweeps, converged, objective_trace)``.
    """
    p = beta.shape[0]
    all_idx = np.empty(p, np.int64)
    m_all = 0
    for j in range(p):
        if free[j]:
            all_idx[m_all] = j
            m_all += 1
    every = np.arange(p)
    act = np.empty(p, np.int64)
    n_hist = 2 * max_sweeps + 1 if record else 1
    hist = np.empty(n_hist)
    n_rec = 0
    if record:
        hist[0] = gaussian_objective(X, y, beta, l1, l2, free, kind, param)
        n_rec = 1
    polish_tol = max(tol, 1e-3)
    if eager:
        polish_tol = np.inf
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        g = c - G @ beta
        maxd = _gauss_sweep(G, g, beta, l1, l2, kind, param, all_idx, m_all, every, p)
        sweeps += 1
        if record:
            hist[n_rec] = gaussian_objective(X, y, beta, l1, l2, free, kind, param)
            n_rec += 1
        if maxd < tol:
            converged = True
            break
        m_act = 0
        for t in range(m_all):
            j = all_idx[t]
            if beta[j] != 0.0:
                act[m_act] = j
                m_act += 1
        # a support solve costs about m_act / 3 active sweeps
        next_try = max(3, m_act // 3)
        backoff = next_try
        if eager:
            # warm start from a nearby problem: the support is probably right
            next_try = 1
        while sweeps < max_sweeps:
            maxd = _gauss_sweep(G, g, beta, l1, l2, kind, param, act, m_act, act, m_act)
            sweeps += 1
            if record:
                hist[n_rec] = gaussian_objective(X, y, beta, l1, l2, free, kind, param)
                n_rec += 1
            if maxd < tol:
                break
            next_try -= 1
            if next_try <= 0 and maxd < polish_tol:
                next_try = backoff
                backoff *= 2
                m_act2 = 0
                for t in range(m_act):
                    if beta[act[t]] != 0.0:
                        act[m_act2] = act[t]
                        m_act2 += 1
                m_act = m_act2
                status = _polish(G, c, g, beta, l1, l2, free, kind, param, act, m_act, all_idx, m_all)
                if status == 0:
                    if record:
                        hist[n_rec] = gaussian_objective(X, y, beta, l1, l2, free, kind, param)
                        n_rec += 1
                    break
                if status == 2:
                    # a new coordinate must enter; only a full sweep can add it
                    break
    return sweeps, converged, hist[:n_rec]


@njit(cache=True)
def logistic_irls(Xa, y, theta, l1, l2, free, tol, max_sweeps, max_outer, w_floor):
    """Penalized logistic regression by iterated quadratic approximation.

    ``Xa`` carries a leading column of ones whose coefficient (the intercept)
    must be unpenalized. Each outer step forms IRLS weights ``p(1-p)``,
    floored at ``w_floor``, and solves the penalized weighted least-squares
    problem with :func:`gaussian_cd` on the weighted Gram matrix.
    Returns ``(sweeps, converged)``; ``theta`` is updated in place.
    """
    n, q = Xa.shape
    dummy_x = np.zeros((1, 1))
    dummy_y = np.zeros(1)
    sweeps = 0
    converged = False
    old = np.empty(q)
    Xw = np.empty((n, q))
    u = np.empty(n)
    change = np.inf
    for outer in range(max_outer):
        eta = Xa @ theta
        for i in range(n):
            pr = 1.0 / (1.0 + np.exp(-eta[i]))
            wi = pr * (1.0 - pr)
            if wi < w_floor:
                wi = w_floor
            u[i] = eta[i] + (y[i] - pr) / wi
            for j in range(q):
                Xw[i, j] = Xa[i, j] * wi
        G = np.ascontiguousarray(Xw.T @ Xa) / n
        c = Xw.T @ u / n
        old[:] = theta
        # early quadratic approximations are solved loosely; the final ones
        # (small outer change) are solved to full accuracy
        inner_tol = tol if outer == 0 else max(tol, 1e-2 * change)
        s, _, _ = gaussian_cd(G, c, theta, l1, l2, free, KIND_EN, 0.0, inner_tol,
                              max_sweeps - sweeps, dummy_x, dummy_y, False, outer > 0)
        sweeps += s
        change = 0.0
        for j in range(q):
            dj = abs(theta[j] - old[j])
            if dj > change:
                change = dj
        if change < tol:
            converged = True
            break
        if sweeps >= max_sweeps:
            break
    return sweeps, converged


@njit(cache=True)
def _pattern_system(G, beta, act, m, l1, l2, kind, param):
    """Support matrix and the lambda-free parts of the stationarity system.

    On a fixed sign/region pattern the stationarity equations read
    ``A b = c_A - lam * qa`` with ``A`` independent of lambda (lasso, SCAD,
    MCP). Returns ``(A, qa_unit, regions)`` where ``qa_unit`` is the penalty
    offset per unit lambda.
    """
    A = np.empty((m, m))
    qa = np.empty(m)
    regions = np.empty(m, np.int64)
    for a in range(m):
        j = act[a]
        for b in range(m):
            A[a, b] = G[j, act[b]]
        if kind == KIND_EN:
            sgn = 1.0 if beta[j] > 0 else -1.0
            qa[a] = sgn  # times lam * factor_j, applied by the caller
            regions[a] = 0
        else:
            q, r, reg = _region(beta[j], l1[j], kind, param)
            A[a, a] += r
            qa[a] = q / l1[j] if l1[j] > 0 else 0.0
            regions[a] = reg
    return A, qa, regions


@njit(cache=True)
def gaussian_path(G, c, yy, lambdas, f1, f2, free, kind, param, tol, max_sweeps,
                  early_stop, min_path, dev_max, dev_change, X, y, record):
    """Warm-started path of :func:`gaussian_cd` fits, largest lambda first.

    ``f1``/``f2`` are the per-coordinate L1/L2 multipliers (penalty factor
    times mix share) so that lambda ``lam`` gives ``l1 = lam * f1``. When the
    previous solution's sign/region pattern is unchanged and there is no L2
    part, the next solution is first tried from the cached inverse of the
    support matrix (it is affine in lambda there); the CD run then only has to
    confirm it.

    Returns ``(betas, sweeps, converged, n_fit, trace, trace_ends)``.
    """
    L = lambdas.shape[0]
    p = G.shape[0]
    betas = np.zeros((L, p))
    sweeps = np.zeros(L, np.int64)
    conv = np.zeros(L, np.bool_)
    beta = np.zeros(p)
    trace = [0.0]
    trace.pop()
    trace_ends = np.zeros(L, np.int64)
    all_idx = np.empty(p, np.int64)
    m_all = 0
    for j in range(p):
        if free[j]:
            all_idx[m_all] = j
            m_all += 1
    has_l2 = False
    for j in range(p):
        if f2[j] > 0:
            has_l2 = True
    cache_ok = False
    cache_act = np.empty(0, np.int64)
    cache_inv = np.empty((0, 0))
    cache_q = np.empty(0)
    cache_reg = np.empty(0, np.int64)
    prev_ratio = 0.0
    n_fit = 0
    for k in range(L):
        lam = lambdas[k]
        l1 = lam * f1
        l2 = lam * f2
        if cache_ok:
            m = cache_act.shape[0]
            rhs = np.empty(m)
            for a in range(m):
                j = cache_act[a]
                if kind == KIND_EN:
                    rhs[a] = c[j] - l1[j] * cache_q[a]
                else:
                    rhs[a] = c[j] - lam * f1[j] * cache_q[a]
            sol = np.zeros(m)
            for a in range(m):
                acc = 0.0
                for b in range(m):
                    acc += cache_inv[a, b] * rhs[b]
                sol[a] = acc
            good = True
            for a in range(m):
                j = cache_act[a]
                if kind == KIND_EN:
                    if sol[a] == 0.0 or (sol[a] > 0) != (cache_q[a] > 0):
                        if l1[j] > 0:
                            good = False
                            break
                else:
                    if sol[a] == 0.0 or (sol[a] > 0) != (beta[j] > 0):
                        good = False
                        break
                    _, _, reg = _region(sol[a], l1[j], kind, param)
                    if reg != cache_reg[a]:
                        good = False
                        break
            if good:
                cand = np.zeros(p)
                for a in range(m):
                    cand[cache_act[a]] = sol[a]
                gc = c - G @ cand
                for t in range(m_all):
                    j = all_idx[t]
                    if cand[j] == 0.0 and abs(gc[j]) > l1[j]:
                        good = False
                        break
            if good:
                beta[:] = cand
        s, cv, hist = gaussian_cd(G, c, beta, l1, l2, free, kind, param, tol,
                                  max_sweeps, X, y, record)
        if record:
            for v in hist:
                trace.append(v)
        trace_ends[k] = len(trace)
        betas[k] = beta
        sweeps[k] = s
        conv[k] = cv
        n_fit = k + 1
        # refresh the pattern cache when the support or pattern moved
        cache_ok = False
        if not has_l2:
            m = 0
            for t in range(m_all):
                if beta[all_idx[t]] != 0.0:
                    m += 1
            if m > 0:
                act = np.empty(m, np.int64)
                m = 0
                for t in range(m_all):
                    j = all_idx[t]
                    if beta[j] != 0.0:
                        act[m] = j
                        m += 1
                A, qa, regs = _pattern_system(G, beta, act, m, l1, l2, kind, param)
                same = act.shape[0] == cache_act.shape[0] and cache_inv.shape[0] == m
                if same:
                    for a in range(m):
                        if act[a] != cache_act[a] or qa[a] != cache_q[a] or regs[a] != cache_reg[a]:
                            same = False
                            break
                if same:
                    cache_ok = True
                else:
                    try:
                        inv = np.linalg.inv(A)
                        cache_inv = inv
                        cache_act = act
                        cache_q = qa
                        cache_reg = regs
                        cache_ok = True
                    except Exception:
                        cache_ok = False
        if early_stop and yy > 0:
            rss = yy
            for j in range(p):
                if beta[j] != 0.0:
                    rss -= 2.0 * c[j] * beta[j]
                    for i in range(p):
                        if beta[i] != 0.0:
                            rss += beta[j] * G[j, i] * beta[i]
            ratio = 1.0 - rss / yy
            if k + 1 >= min_path and (ratio > dev_max or ratio - prev_ratio < dev_change * ratio):
                break
            prev_ratio = ratio
    tr = np.empty(len(trace))
    for i in range(len(trace)):
        tr[i] = trace[i]
    return betas[:n_fit], sweeps[:n_fit], conv[:n_fit], n_fit, tr, trace_ends[:n_fit]
