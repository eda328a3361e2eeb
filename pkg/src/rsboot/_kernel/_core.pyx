# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the resample/refit/minimize unit.

Mirrors ``rsboot._kernel._pyfallback`` step for step; the contract both
backends satisfy is documented on ``rsboot._kernel``.  The heavy loops
run without the GIL so bootstrap worker threads scale.
"""

from libc.math cimport exp, log, sqrt, isfinite, INFINITY
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cdef double LINESEARCH_MIN = 1e-20

# SplitMix64 draw path; constants match rsboot.rng.
cdef uint64_t GAMMA = 0x9E3779B97F4A7C15
cdef uint64_t MIX_A = 0xBF58476D1CE4E5B9
cdef uint64_t MIX_B = 0x94D049BB133111EB


cdef inline uint64_t mix_draw(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX_A
    z = (z ^ (z >> 27)) * MIX_B
    return z ^ (z >> 31)


cdef void c_resample(const double[:, ::1] values, const int64_t[::1] counts,
                     uint64_t key, double[:, ::1] out) nogil:
    cdef Py_ssize_t i, j, ncells = counts.shape[0]
    cdef uint64_t counter = 0
    cdef uint64_t d
    cdef int64_t n
    for i in range(ncells):
        n = counts[i]
        for j in range(n):
            counter += 1
            d = mix_draw(key + counter * GAMMA)
            out[i, j] = values[i, <Py_ssize_t> (d % <uint64_t> n)]


cdef bint c_fit_pair(const double[:, ::1] values, const int64_t[::1] counts,
                     const double[:, ::1] projector, double var_floor,
                     double[::1] ybar, double[::1] logvar,
                     double[::1] mean_c, double[::1] logvar_c) nogil:
    cdef Py_ssize_t i, j, t
    cdef Py_ssize_t ncells = counts.shape[0]
    cdef Py_ssize_t nterms = projector.shape[0]
    cdef int64_t n
    cdef double m, s2, d, acc_m, acc_v
    cdef bint floored = False
    for i in range(ncells):
        n = counts[i]
        acc_m = 0.0
        for j in range(n):
            acc_m += values[i, j]
        m = acc_m / n
        acc_v = 0.0
        for j in range(n):
            d = values[i, j] - m
            acc_v += d * d
        s2 = acc_v / (n - 1)
        if s2 < var_floor:
            s2 = var_floor
            floored = True
        ybar[i] = m
        logvar[i] = log(s2)
    for t in range(nterms):
        acc_m = 0.0
        acc_v = 0.0
        for i in range(ncells):
            acc_m += projector[t, i] * ybar[i]
            acc_v += projector[t, i] * logvar[i]
        mean_c[t] = acc_m
        logvar_c[t] = acc_v
    return floored


cdef inline double eval_quad(const double* c, const double* x, int k) nogil:
    cdef double v = c[0]
    cdef int i, j, idx
    for i in range(k):
        v += c[1 + i] * x[i]
        v += c[1 + k + i] * x[i] * x[i]
    idx = 1 + 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            v += c[idx] * x[i] * x[j]
            idx += 1
    return v


cdef inline void grad_quad(const double* c, const double* x, int k,
                           double* g) nogil:
    cdef int i, j, idx
    for i in range(k):
        g[i] = c[1 + i] + 2.0 * c[1 + k + i] * x[i]
    idx = 1 + 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            g[i] += c[idx] * x[j]
            g[j] += c[idx] * x[i]
            idx += 1


cdef int c_objective(const double* mc, const double* lc, double t0,
                     double vlog_max, const double* x, int k,
                     double* out_f) nogil:
    cdef double m = eval_quad(mc, x, k)
    cdef double vl = eval_quad(lc, x, k)
    cdef double f
    if vl > vlog_max or not isfinite(vl) or not isfinite(m):
        return 1
    f = (m - t0) * (m - t0) + exp(vl)
    if not isfinite(f):
        return 1
    out_f[0] = f
    return 0


cdef int c_obj_grad(const double* mc, const double* lc, double t0,
                    double vlog_max, const double* x, int k,
                    double* g, double* gm, double* gv) nogil:
    cdef double m = eval_quad(mc, x, k)
    cdef double vl = eval_quad(lc, x, k)
    cdef double ev
    cdef int i
    if vl > vlog_max or not isfinite(vl) or not isfinite(m):
        return 1
    ev = exp(vl)
    grad_quad(mc, x, k, gm)
    grad_quad(lc, x, k, gv)
    for i in range(k):
        g[i] = 2.0 * (m - t0) * gm[i] + ev * gv[i]
    return 0


cdef inline double clamp(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef int c_descend(const double* mc, const double* lc, double t0,
                   const double* lo, const double* up, int k,
                   double* x, double* out_f,
                   int max_iter, double grad_tol, double step_tol,
                   double armijo_c, double shrink, double vlog_max,
                   double* work, bint* capped) nogil:
    # work holds 4k doubles: g, gm, gv, xn
    cdef double* g = work
    cdef double* gm = work + k
    cdef double* gv = work + 2 * k
    cdef double* xn = work + 3 * k
    cdef double fx, fn, pgn, t, gdx, stepn, d
    cdef int it, i, status
    cdef bint moved
    status = c_objective(mc, lc, t0, vlog_max, x, k, &fx)
    if status:
        return status
    capped[0] = False
    for it in range(max_iter):
        status = c_obj_grad(mc, lc, t0, vlog_max, x, k, g, gm, gv)
        if status:
            return status
        pgn = 0.0
        for i in range(k):
            d = g[i]
            if (x[i] <= lo[i] and d > 0.0) or (x[i] >= up[i] and d < 0.0):
                d = 0.0
            pgn += d * d
        if sqrt(pgn) <= grad_tol:
            out_f[0] = fx
            return 0
        t = 1.0
        moved = False
        fn = 0.0
        while t >= LINESEARCH_MIN:
            gdx = 0.0
            for i in range(k):
                xn[i] = clamp(x[i] - t * g[i], lo[i], up[i])
                gdx += g[i] * (xn[i] - x[i])
            status = c_objective(mc, lc, t0, vlog_max, xn, k, &fn)
            if status:
                return status
            if fn <= fx + armijo_c * gdx:
                moved = True
                break
            t *= shrink
        if not moved:
            out_f[0] = fx
            return 0
        stepn = 0.0
        for i in range(k):
            d = xn[i] - x[i]
            stepn += d * d
            x[i] = xn[i]
        fx = fn
        if sqrt(stepn) < step_tol:
            out_f[0] = fx
            return 0
    capped[0] = True
    out_f[0] = fx
    return 0


cdef inline bint lex_less(const double* a, const double* b, int k) nogil:
    cdef int i
    for i in range(k):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


cdef int c_minimize(const double* mc, const double* lc, double t0,
                    const double* lo, const double* up, int k,
                    long long total, int grid_pts, int n_starts,
                    int max_iter, double grad_tol, double step_tol,
                    double armijo_c, double shrink, double tie_tol,
                    double vlog_max,
                    double* step, long long* idx, double* xbuf,
                    double* best_f, double* best_x,
                    double* cand_f, double* cand_x,
                    double* work, double* out_x, double* out_f,
                    bint* capped) nogil:
    cdef long long gidx
    cdef int i, j, s, p, nfilled, status, win
    cdef double f, fmin
    cdef bint cap_one

    for j in range(k):
        step[j] = (up[j] - lo[j]) / (grid_pts - 1)
        idx[j] = 0
    nfilled = n_starts if n_starts < total else <int> total
    for s in range(nfilled):
        best_f[s] = INFINITY

    # Stage 1: full grid scan, last axis fastest, keep the n_starts best.
    for gidx in range(total):
        for j in range(k):
            f = lo[j] + idx[j] * step[j]
            if f > up[j]:
                f = up[j]
            xbuf[j] = f
        status = c_objective(mc, lc, t0, vlog_max, xbuf, k, &f)
        if status:
            return status
        p = nfilled
        while p > 0 and f < best_f[p - 1]:
            p -= 1
        if p < nfilled:
            for s in range(nfilled - 1, p, -1):
                best_f[s] = best_f[s - 1]
                for j in range(k):
                    best_x[s * k + j] = best_x[(s - 1) * k + j]
            best_f[p] = f
            for j in range(k):
                best_x[p * k + j] = xbuf[j]
        j = k - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] < grid_pts:
                break
            idx[j] = 0
            j -= 1

    # Stage 2: polish each kept point.
    capped[0] = False
    for s in range(nfilled):
        for j in range(k):
            cand_x[s * k + j] = clamp(best_x[s * k + j], lo[j], up[j])
        cap_one = False
        status = c_descend(mc, lc, t0, lo, up, k, cand_x + s * k,
                           cand_f + s, max_iter, grad_tol, step_tol,
                           armijo_c, shrink, vlog_max, work, &cap_one)
        if status:
            return status
        if cap_one:
            capped[0] = True

    fmin = cand_f[0]
    for s in range(1, nfilled):
        if cand_f[s] < fmin:
            fmin = cand_f[s]
    win = -1
    for s in range(nfilled):
        if cand_f[s] <= fmin + tie_tol:
            if win < 0 or lex_less(cand_x + s * k, cand_x + win * k, k):
                win = s
    for j in range(k):
        out_x[j] = cand_x[win * k + j]
    out_f[0] = cand_f[win]
    return 0


def resample(values, counts, key):
    """Within-cell resampling with replacement; see the fallback docs."""
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef int64_t[::1] cnts = np.ascontiguousarray(counts, dtype=np.int64)
    out = np.zeros((vals.shape[0], vals.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out_mv = out
    cdef uint64_t k = key
    with nogil:
        c_resample(vals, cnts, k, out_mv)
    return out


def fit_pair(values, counts, projector, double var_floor):
    """Cell moments then both surface fits; see the fallback docs."""
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef int64_t[::1] cnts = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[:, ::1] proj = np.ascontiguousarray(projector, dtype=np.float64)
    cdef Py_ssize_t ncells = cnts.shape[0]
    cdef Py_ssize_t nterms = proj.shape[0]
    if proj.shape[1] != ncells:
        raise ValueError("projector width does not match the cell count")
    ybar = np.empty(ncells, dtype=np.float64)
    logvar = np.empty(ncells, dtype=np.float64)
    mean_c = np.empty(nterms, dtype=np.float64)
    logvar_c = np.empty(nterms, dtype=np.float64)
    cdef double[::1] ybar_mv = ybar
    cdef double[::1] logvar_mv = logvar
    cdef double[::1] mean_mv = mean_c
    cdef double[::1] logvar_c_mv = logvar_c
    cdef bint floored
    with nogil:
        floored = c_fit_pair(vals, cnts, proj, var_floor,
                             ybar_mv, logvar_mv, mean_mv, logvar_c_mv)
    return mean_c, logvar_c, bool(floored)


cdef long long _grid_total(int k, int grid_pts) except -1:
    cdef long long total = 1
    cdef int j
    for j in range(k):
        total *= grid_pts
        if total > 50_000_000:
            raise ValueError("search grid too large for this factor count")
    return total


def minimize_sql(mean_c, logvar_c, double t0, lower, upper,
                 int grid_pts, int n_starts, int max_iter,
                 double grad_tol, double step_tol, double armijo_c,
                 double shrink, double tie_tol, double vlog_max):
    """Squared-loss minimization over the box; see the fallback docs."""
    cdef double[::1] mc = np.ascontiguousarray(mean_c, dtype=np.float64)
    cdef double[::1] lc = np.ascontiguousarray(logvar_c, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[::1] up = np.ascontiguousarray(upper, dtype=np.float64)
    cdef int k = lo.shape[0]
    cdef int nterms = 1 + 2 * k + k * (k - 1) // 2
    if mc.shape[0] != nterms or lc.shape[0] != nterms:
        raise ValueError("coefficient length does not match the factor count")
    if grid_pts < 2 or n_starts < 1:
        raise ValueError("grid needs at least 2 points per axis and 1 start")
    cdef long long total = _grid_total(k, grid_pts)

    scratch = np.empty(k * (3 + n_starts * 2 + 4) + 2 * n_starts + 1,
                       dtype=np.float64)
    cdef double[::1] sc = scratch
    idx_arr = np.zeros(k, dtype=np.int64)
    cdef int64_t[::1] idx_mv = idx_arr
    out_x = np.empty(k, dtype=np.float64)
    cdef double[::1] out_mv = out_x
    cdef double out_f = 0.0
    cdef bint capped = False
    cdef int status
    cdef double* base = &sc[0]
    with nogil:
        status = c_minimize(&mc[0], &lc[0], t0, &lo[0], &up[0], k,
                            total, grid_pts, n_starts, max_iter,
                            grad_tol, step_tol, armijo_c, shrink,
                            tie_tol, vlog_max,
                            base,                                   # step (k)
                            <long long*> &idx_mv[0],                # idx (k)
                            base + k,                               # xbuf (k)
                            base + 2 * k,                           # best_f (n_starts)
                            base + 2 * k + n_starts,                # best_x (n_starts*k)
                            base + 2 * k + n_starts + n_starts * k,             # cand_f
                            base + 2 * k + 2 * n_starts + n_starts * k,         # cand_x
                            base + 2 * k + 2 * n_starts + 2 * n_starts * k,     # work (4k)
                            &out_mv[0], &out_f, &capped)
    if status:
        return np.full(k, np.nan), float("nan"), 1, False
    return out_x, float(out_f), 0, bool(capped)


def replicate_optimum(values, counts, projector, key, double t0,
                      lower, upper, double var_floor,
                      int grid_pts, int n_starts, int max_iter,
                      double grad_tol, double step_tol, double armijo_c,
                      double shrink, double tie_tol, double vlog_max):
    """One full bootstrap unit: resample, refit, minimize (fused)."""
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef int64_t[::1] cnts = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[:, ::1] proj = np.ascontiguousarray(projector, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[::1] up = np.ascontiguousarray(upper, dtype=np.float64)
    cdef int k = lo.shape[0]
    cdef Py_ssize_t ncells = cnts.shape[0]
    cdef Py_ssize_t nterms = proj.shape[0]
    if nterms != 1 + 2 * k + k * (k - 1) // 2:
        raise ValueError("projector height does not match the factor count")
    if grid_pts < 2 or n_starts < 1:
        raise ValueError("grid needs at least 2 points per axis and 1 start")
    cdef long long total = _grid_total(k, grid_pts)
    cdef uint64_t ukey = key

    resampled = np.zeros((vals.shape[0], vals.shape[1]), dtype=np.float64)
    cdef double[:, ::1] res_mv = resampled
    moments = np.empty(2 * ncells, dtype=np.float64)
    cdef double[::1] mom = moments
    cdef double[::1] ybar_mv = mom[:ncells]
    cdef double[::1] lv_mv = mom[ncells:]
    coefs = np.empty(2 * nterms, dtype=np.float64)
    cdef double[::1] cf = coefs
    cdef double[::1] mean_mv = cf[:nterms]
    cdef double[::1] logvar_mv = cf[nterms:]
    scratch = np.empty(k * (3 + n_starts * 2 + 4) + 2 * n_starts + 1,
                       dtype=np.float64)
    cdef double[::1] sc = scratch
    idx_arr = np.zeros(k, dtype=np.int64)
    cdef int64_t[::1] idx_mv = idx_arr
    out_x = np.empty(k, dtype=np.float64)
    cdef double[::1] out_mv = out_x
    cdef double out_f = 0.0
    cdef bint capped = False
    cdef bint floored = False
    cdef int status
    cdef double* base = &sc[0]
    with nogil:
        c_resample(vals, cnts, ukey, res_mv)
        floored = c_fit_pair(res_mv, cnts, proj, var_floor,
                             ybar_mv, lv_mv, mean_mv, logvar_mv)
        status = c_minimize(&cf[0], &cf[nterms], t0, &lo[0], &up[0], k,
                            total, grid_pts, n_starts, max_iter,
                            grad_tol, step_tol, armijo_c, shrink,
                            tie_tol, vlog_max,
                            base,
                            <long long*> &idx_mv[0],
                            base + k,
                            base + 2 * k,
                            base + 2 * k + n_starts,
                            base + 2 * k + n_starts + n_starts * k,
                            base + 2 * k + 2 * n_starts + n_starts * k,
                            base + 2 * k + 2 * n_starts + 2 * n_starts * k,
                            &out_mv[0], &out_f, &capped)
    if status:
        return np.full(k, np.nan), 1, 0
    flags = (1 if floored else 0) | (2 if capped else 0)
    return out_x, 0, flags
