"""Compiled inner loops: mean recursions, the box-constrained Newton solver,
row-wise likelihood-matrix filling and the segmentation dynamic program.

Everything here works on 0-based, half-open segments ``y[a:b]``. Public
modules translate to the 1-based inclusive convention.
"""

import os

import numba
import numpy as np
from numba import njit, prange

# the TBB runtime shipped on some systems is too old and numba warns on every
# parallel launch; OpenMP is always available and deterministic for our loops
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"

# family codes
INARCH1 = 0
INGARCH11 = 1
BININARCH1 = 2
INARCHINF = 3

# objective kinds
AFFINE = 0
GARCH = 1
PAIRS = 2

# largest count for which (previous, current) pair tables are used
PAIR_MAX = 255

_ACTIVE_EPS = 1e-12
_ARMIJO = 1e-4


@njit(cache=True)
def affine_design(code, y, a, decay, hist):
    """Design rows X_t and offsets c_t with lambda_t = c_t + theta . X_t for
    the segment y[a:]. With ``hist == 0`` the history before ``a`` is taken
    as zero; otherwise the observed past y[:a] is used."""
    m = y.size - a
    h = a if hist != 0 else 0
    if code == INARCHINF:
        X = np.ones((m, 1))
        c = np.zeros(m)
        for t in range(m):
            s = 0.0
            for k in range(1, t + h + 1):
                s += decay[k - 1] * y[a + t - k]
            c[t] = s
        return X, c
    X = np.empty((m, 2))
    c = np.zeros(m)
    for t in range(m):
        X[t, 0] = 1.0
        X[t, 1] = y[a + t - 1] if t + h > 0 else 0.0
    return X, c


@njit(cache=True)
def garch_path(theta, yseg):
    m = yseg.size
    lam = np.empty(m)
    dl = np.empty((m, 3))
    a0, a, b = theta[0], theta[1], theta[2]
    omb = 1.0 - b
    lam[0] = a0 / omb
    dl[0, 0] = 1.0 / omb
    dl[0, 1] = 0.0
    dl[0, 2] = a0 / (omb * omb)
    for t in range(1, m):
        yp = yseg[t - 1]
        lam[t] = a0 + a * yp + b * lam[t - 1]
        dl[t, 0] = 1.0 + b * dl[t - 1, 0]
        dl[t, 1] = yp + b * dl[t - 1, 1]
        dl[t, 2] = lam[t - 1] + b * dl[t - 1, 2]
    return lam, dl


@njit(cache=True)
def affine_eval(theta, X, c, y, m, g, H, want):
    d = theta.size
    ll = 0.0
    if want >= 1:
        for k in range(d):
            g[k] = 0.0
    if want >= 2:
        for k in range(d):
            for j in range(d):
                H[k, j] = 0.0
    for t in range(m):
        lam = c[t]
        for k in range(d):
            lam += theta[k] * X[t, k]
        if not lam > 0.0:
            return -np.inf
        yt = y[t]
        if yt > 0.0:
            ll += yt * np.log(lam) - lam
        else:
            ll -= lam
        if want >= 1:
            w = yt / lam
            for k in range(d):
                g[k] += (w - 1.0) * X[t, k]
            if want >= 2 and yt > 0.0:
                w2 = w / lam
                for k in range(d):
                    xk = w2 * X[t, k]
                    for j in range(k + 1):
                        H[k, j] -= xk * X[t, j]
    if want >= 2:
        for k in range(d):
            for j in range(k):
                H[j, k] = H[k, j]
    return ll


@njit(cache=True)
def garch_eval(theta, y, m, g, H, want):
    """The segment is the last ``m`` entries of ``y``; earlier entries only
    feed the recursion."""
    a0, a, b = theta[0], theta[1], theta[2]
    s = y.size - m
    omb = 1.0 - b
    lam = a0 / omb
    dl = np.empty(3)
    dl[0] = 1.0 / omb
    dl[1] = 0.0
    dl[2] = a0 / (omb * omb)
    d2 = np.zeros((3, 3))
    d2[0, 2] = 1.0 / (omb * omb)
    d2[2, 0] = d2[0, 2]
    d2[2, 2] = 2.0 * a0 / (omb * omb * omb)
    ll = 0.0
    if want >= 1:
        for k in range(3):
            g[k] = 0.0
    if want >= 2:
        for k in range(3):
            for j in range(3):
                H[k, j] = 0.0
    for t in range(y.size):
        if t > 0:
            yp = y[t - 1]
            if want >= 2:
                for k in range(3):
                    for j in range(3):
                        d2[k, j] *= b
                for k in range(3):
                    d2[2, k] += dl[k]
                    d2[k, 2] += dl[k]
            if want >= 1:
                dl[0] = 1.0 + b * dl[0]
                dl[1] = yp + b * dl[1]
                dl[2] = lam + b * dl[2]
            lam = a0 + a * yp + b * lam
        if t < s:
            continue
        if not lam > 0.0:
            return -np.inf
        yt = y[t]
        if yt > 0.0:
            ll += yt * np.log(lam) - lam
        else:
            ll -= lam
        if want >= 1:
            w = yt / lam
            for k in range(3):
                g[k] += (w - 1.0) * dl[k]
            if want >= 2:
                w2 = w / lam
                for k in range(3):
                    for j in range(3):
                        H[k, j] += (w - 1.0) * d2[k, j] - w2 * dl[k] * dl[j]
    return ll


@njit(cache=True)
def pair_table(yseg, prev0):
    """Distinct (y_{t-1}, y_t) pairs in order of first appearance, with counts.

    Rows are (previous, current, count); ``prev0`` is the pre-segment value.
    """
    m = yseg.size
    top = int(prev0)
    for t in range(m):
        top = max(top, int(yseg[t]))
    index = np.full((top + 1, top + 1), -1, dtype=np.int64)
    table = np.empty((m, 3))
    npairs = 0
    prev = int(prev0)
    for t in range(m):
        cur = int(yseg[t])
        k = index[prev, cur]
        if k < 0:
            index[prev, cur] = npairs
            table[npairs, 0] = prev
            table[npairs, 1] = cur
            table[npairs, 2] = 1.0
            npairs += 1
        else:
            table[k, 2] += 1.0
        prev = cur
    return table[:npairs].copy()


@njit(cache=True)
def pair_eval(theta, table, g, H, want):
    """Quasi-likelihood of lambda = theta0 + theta1 * previous over a pair table."""
    ll = 0.0
    if want >= 1:
        g[0] = 0.0
        g[1] = 0.0
    h00 = 0.0
    h01 = 0.0
    h11 = 0.0
    for p in range(table.shape[0]):
        x = table[p, 0]
        yt = table[p, 1]
        cnt = table[p, 2]
        lam = theta[0] + theta[1] * x
        if not lam > 0.0:
            return -np.inf
        if yt > 0.0:
            ll += cnt * (yt * np.log(lam) - lam)
        else:
            ll -= cnt * lam
        if want >= 1:
            w = cnt * (yt / lam - 1.0)
            g[0] += w
            g[1] += w * x
            if want >= 2 and yt > 0.0:
                w2 = cnt * yt / (lam * lam)
                h00 -= w2
                h01 -= w2 * x
                h11 -= w2 * x * x
    if want >= 2:
        H[0, 0] = h00
        H[0, 1] = h01
        H[1, 0] = h01
        H[1, 1] = h11
    return ll


@njit(cache=True)
def evaluate(kind, theta, X, c, y, m, g, H, want):
    """Segment quasi-likelihood (and optionally gradient / Hessian).

    ``kind`` selects the representation: AFFINE uses design rows ``X`` and
    offsets ``c``; PAIRS uses a pair table passed as ``X``; GARCH runs the
    INGARCH(1,1) recursion on ``y``.
    """
    if kind == AFFINE:
        return affine_eval(theta, X, c, y, m, g, H, want)
    if kind == PAIRS:
        return pair_eval(theta, X, g, H, want)
    return garch_eval(theta, y, m, g, H, want)


@njit(cache=True)
def project(p, lower, upper, pi, pj, smax, out):
    """Euclidean projection onto the box, intersected with
    ``theta[pi] + theta[pj] <= smax`` when ``pi >= 0``."""
    for k in range(p.size):
        out[k] = min(max(p[k], lower[k]), upper[k])
    if pi >= 0 and out[pi] + out[pj] > smax:
        lo = max(lower[pi], smax - upper[pj])
        hi = min(upper[pi], smax - lower[pj])
        v = 0.5 * (smax + p[pi] - p[pj])
        v = min(max(v, lo), hi)
        out[pi] = v
        out[pj] = smax - v


@njit(cache=True)
def _cholesky_solve(M, rhs, nf, out):
    L = np.zeros((nf, nf))
    for i in range(nf):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 1e-300:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    z = np.empty(nf)
    for i in range(nf):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
    for i in range(nf - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, nf):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return True


@njit(cache=True)
def _spd_solve(M, rhs, nf, out):
    """Solve M x = rhs, shifting the diagonal until M is positive definite."""
    if _cholesky_solve(M, rhs, nf, out):
        return
    scale = 0.0
    for i in range(nf):
        scale = max(scale, abs(M[i, i]))
    mu = 1e-8 * max(scale, 1.0)
    M2 = M.copy()
    for _ in range(40):
        for i in range(nf):
            M2[i, i] = M[i, i] + mu
        if _cholesky_solve(M2, rhs, nf, out):
            return
        mu *= 10.0


@njit(cache=True)
def stationarity(theta, g, m, lower, upper, pi, pj, smax, fixed, buf, pt):
    """Infinity norm of P(theta + g/m) - theta over the non-fixed coordinates."""
    d = theta.size
    for k in range(d):
        buf[k] = theta[k] + g[k] / m
    project(buf, lower, upper, pi, pj, smax, pt)
    r = 0.0
    for k in range(d):
        if not fixed[k]:
            r = max(r, abs(pt[k] - theta[k]))
    return r


@njit(cache=True)
def _line_search(kind, theta, ll, g, direction, X, c, y, m, lower, upper,
                 pi, pj, smax, fixed, cand, g2, H2, buf):
    d = theta.size
    t = 1.0
    for _ in range(60):
        for k in range(d):
            buf[k] = theta[k] + t * direction[k]
        project(buf, lower, upper, pi, pj, smax, cand)
        for k in range(d):
            if fixed[k]:
                cand[k] = theta[k]
        moved = False
        gain = 0.0
        for k in range(d):
            delta = cand[k] - theta[k]
            if delta != 0.0:
                moved = True
            gain += g[k] * delta
        if not moved:
            t *= 0.5
            continue
        ll_new = evaluate(kind, cand, X, c, y, m, g2, H2, 2)
        if gain > 0.0:
            if ll_new >= ll + _ARMIJO * gain:
                return ll_new
        elif ll_new > ll:
            return ll_new
        t *= 0.5
    return -np.inf


@njit(cache=True)
def maximize(kind, theta0, X, c, y, m, lower, upper, pi, pj, smax, fixed, tol,
             maxit, theta_out, stats):
    """Projected Newton ascent of the segment quasi-likelihood.

    Returns the maximized value; ``theta_out`` receives the argmax and
    ``stats`` receives (converged, iterations, final stationarity measure).
    """
    d = theta0.size
    theta = np.empty(d)
    project(theta0, lower, upper, pi, pj, smax, theta)
    for k in range(d):
        if fixed[k]:
            theta[k] = lower[k]
    g = np.empty(d)
    H = np.empty((d, d))
    g2 = np.empty(d)
    H2 = np.empty((d, d))
    cand = np.empty(d)
    buf = np.empty(d)
    pt = np.empty(d)
    direction = np.empty(d)
    idx = np.empty(d, dtype=np.int64)
    M = np.empty((d, d))
    rhs = np.empty(d)
    sol = np.empty(d)
    ll = evaluate(kind, theta, X, c, y, m, g, H, 2)
    it = 0
    converged = False
    r = np.inf
    while True:
        r = stationarity(theta, g, m, lower, upper, pi, pj, smax, fixed, buf, pt)
        if r <= tol:
            converged = True
            break
        if it >= maxit:
            break
        it += 1

        nf = 0
        for k in range(d):
            if fixed[k]:
                continue
            if theta[k] <= lower[k] + _ACTIVE_EPS * (1.0 + abs(lower[k])) and g[k] < 0.0:
                continue
            if theta[k] >= upper[k] - _ACTIVE_EPS * (1.0 + abs(upper[k])) and g[k] > 0.0:
                continue
            idx[nf] = k
            nf += 1
        for k in range(d):
            direction[k] = 0.0
        if nf > 0:
            for a in range(nf):
                rhs[a] = g[idx[a]]
                for b in range(nf):
                    M[a, b] = -H[idx[a], idx[b]]
            _spd_solve(M, rhs, nf, sol)
            for a in range(nf):
                direction[idx[a]] = sol[a]
            if pi >= 0:
                ia = -1
                ib = -1
                for a in range(nf):
                    if idx[a] == pi:
                        ia = a
                    if idx[a] == pj:
                        ib = a
                on_face = theta[pi] + theta[pj] >= smax - _ACTIVE_EPS * (1.0 + abs(smax))
                if on_face and ia >= 0 and ib >= 0 and direction[pi] + direction[pj] > 0.0:
                    # Newton step restricted to the face theta[pi] + theta[pj] = smax
                    for a in range(nf):
                        rhs[a] = 0.0
                    rhs[ia] = 1.0
                    rhs[ib] = 1.0
                    ma = np.empty(nf)
                    _spd_solve(M, rhs, nf, ma)
                    num = direction[pi] + direction[pj]
                    den = ma[ia] + ma[ib]
                    if den > 0.0:
                        mu = num / den
                        for a in range(nf):
                            direction[idx[a]] -= mu * ma[a]
        ll_new = -np.inf
        if nf > 0:
            ll_new = _line_search(kind, theta, ll, g, direction, X, c, y, m, lower,
                                  upper, pi, pj, smax, fixed, cand, g2, H2, buf)
        if ll_new == -np.inf:
            scale = 0.0
            for k in range(d):
                scale = max(scale, abs(H[k, k]))
            if scale <= 0.0:
                scale = 1e-8
            for k in range(d):
                direction[k] = 0.0 if fixed[k] else g[k] / scale
            ll_new = _line_search(kind, theta, ll, g, direction, X, c, y, m, lower,
                                  upper, pi, pj, smax, fixed, cand, g2, H2, buf)
        if ll_new == -np.inf:
            break
        ll = ll_new
        for k in range(d):
            theta[k] = cand[k]
            g[k] = g2[k]
            for j in range(d):
                H[k, j] = H2[k, j]
    for k in range(d):
        theta_out[k] = theta[k]
    stats[0] = 1.0 if converged else 0.0
    stats[1] = it
    stats[2] = r
    return ll


@njit(cache=True)
def mom_seed(code, mean, decay_sum, d, out):
    if code == INGARCH11:
        out[0] = mean * 0.5
        out[1] = 0.3
        out[2] = 0.2
    elif code == INARCHINF:
        out[0] = mean * (1.0 - decay_sum)
    else:
        out[0] = mean * 0.7
        out[1] = 0.3


@njit(cache=True)
def fill_row(kind, code, y, a, ends, hist, Xf, cf, lower, upper, pi, pj, smax, center,
             decay_sum, tol, maxit, V, TH, CONV, IT):
    """Fit every segment y[a:b] for b in ``ends`` (ascending), warm-starting
    each fit from the previous one. For affine families ``Xf, cf`` are the
    design of y[a:] (or of the whole series when ``hist`` is set, then
    sliced here)."""
    d = lower.size
    n = y.size
    yseg = y[a:]
    prev0 = int(y[a - 1]) if (hist != 0 and a > 0) else 0
    top = prev0
    for t in range(yseg.size):
        top = max(top, int(yseg[t]))
    use_pairs = (code == INARCH1 or code == BININARCH1) and top <= PAIR_MAX
    if use_pairs:
        kind = PAIRS
        index = np.full((top + 1, top + 1), -1, dtype=np.int64)
        X = np.empty((yseg.size, 3))
        c = np.zeros(1)
    elif kind == AFFINE:
        index = np.full((1, 1), -1, dtype=np.int64)
        if hist != 0:
            X = Xf[a:]
            c = cf[a:]
        else:
            X = Xf
            c = cf
    else:
        index = np.full((1, 1), -1, dtype=np.int64)
        X = np.zeros((1, 1))
        c = np.zeros(1)
    # the GARCH recursion needs the observed past in front of the segment
    lo = 0 if (kind == GARCH and hist != 0) else a
    npairs = 0
    prev = prev0
    fixed = np.zeros(d, dtype=np.bool_)
    warm = np.empty(d)
    has_warm = False
    cands = np.empty((3, d))
    tmp = np.empty(d)
    g = np.empty(d)
    H = np.empty((d, d))
    theta = np.empty(d)
    stats = np.empty(3)
    total = 0.0
    nonzero_lag = prev0 != 0
    pos = 0  # number of observations folded into ``total``
    lagpos = 0
    for e in range(ends.size):
        b = ends[e]
        m = b - a
        while pos < m:
            total += yseg[pos]
            if use_pairs:
                cur = int(yseg[pos])
                k = index[prev, cur]
                if k < 0:
                    index[prev, cur] = npairs
                    X[npairs, 0] = prev
                    X[npairs, 1] = cur
                    X[npairs, 2] = 1.0
                    npairs += 1
                else:
                    X[k, 2] += 1.0
                prev = cur
            pos += 1
        while lagpos < m - 1:
            if yseg[lagpos] != 0.0:
                nonzero_lag = True
            lagpos += 1
        Xs = X[:npairs] if use_pairs else X
        ys = y[lo:b]
        # slope coordinate is not identified when every lagged value is zero
        if code == INARCH1 or code == BININARCH1:
            fixed[1] = not nonzero_lag
        ncand = 0
        if has_warm:
            for k in range(d):
                cands[ncand, k] = warm[k]
            ncand += 1
        for k in range(d):
            cands[ncand, k] = center[k]
        ncand += 1
        mom_seed(code, total / m, decay_sum, d, tmp)
        for k in range(d):
            cands[ncand, k] = tmp[k]
        ncand += 1
        best = -np.inf
        best_i = 0
        for ci in range(ncand):
            project(cands[ci], lower, upper, pi, pj, smax, tmp)
            for k in range(d):
                if fixed[k]:
                    tmp[k] = lower[k]
                cands[ci, k] = tmp[k]
            v = evaluate(kind, tmp, Xs, c, ys, m, g, H, 0)
            if v > best:
                best = v
                best_i = ci
        ll = maximize(kind, cands[best_i], Xs, c, ys, m, lower, upper, pi, pj,
                      smax, fixed, tol, maxit, theta, stats)
        V[a, b] = ll
        for k in range(d):
            TH[a, b, k] = theta[k]
            warm[k] = theta[k]
        has_warm = True
        CONV[a, b] = stats[0] > 0.5
        IT[a, b] = int(stats[1])
    return n


@njit(cache=True, parallel=True)
def fill_matrix(kind, code, y, starts, end_grid, umin, hist, lower, upper, pi, pj, smax,
                center, decay, decay_sum, tol, maxit, V, TH, CONV, IT):
    affine = kind == AFFINE and not ((code == INARCH1 or code == BININARCH1) and y.max() <= PAIR_MAX)
    if affine and hist != 0:
        Xf, cf = affine_design(code, y, 0, decay, 1)
    else:
        Xf = np.zeros((1, 1))
        cf = np.zeros(1)
    for r in prange(starts.size):
        a = starts[r]
        ends = end_grid[end_grid - a >= umin]
        if ends.size > 0:
            if affine and hist == 0:
                Xa, ca = affine_design(code, y, a, decay, 0)
            else:
                Xa = Xf
                ca = cf
            fill_row(kind, code, y, a, ends, hist, Xa, ca, lower, upper, pi, pj, smax,
                     center, decay_sum, tol, maxit, V, TH, CONV, IT)


@njit(cache=True)
def dp_tables(V, kappa, kmax):
    """C[K-1, t]: best penalized cost of y[0:t] in K segments; Z[K-1, t]: the
    boundary l achieving C[K, t]. ``V[l, t]`` is -inf where inadmissible."""
    n = V.shape[0] - 1
    C = np.full((kmax, n + 1), np.inf)
    Z = np.full((max(kmax - 1, 0), n + 1), -1, dtype=np.int64)
    for t in range(1, n + 1):
        if V[0, t] > -np.inf:
            C[0, t] = -2.0 * V[0, t] + kappa
    for K in range(1, kmax):
        for t in range(1, n + 1):
            best = np.inf
            arg = -1
            for l in range(1, t):
                prev = C[K - 1, l]
                if prev < np.inf and V[l, t] > -np.inf:
                    v = prev - 2.0 * V[l, t] + kappa
                    if v < best:
                        best = v
                        arg = l
            C[K, t] = best
            Z[K - 1, t] = arg
    return C, Z
