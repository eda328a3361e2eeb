"""NumPy implementation of the resample/refit/minimize unit.

Reference backend: readable, dependency-light, and algorithmically
identical to the compiled core (see the package docstring for the
contract).  The generic two-stage minimizer here is also reused directly
by the dual-response solver, which is not on the hot path.
"""

from __future__ import annotations

import math

import numpy as np

from .. import rng
from ..errors import PathologicalSurfaceError
from ..surfaces import monomial_matrix

_LINESEARCH_MIN = 1e-20

# (grid_pts, lower bytes, upper bytes) -> (coords, monomial matrix)
_GRID_CACHE: dict = {}


def resample(values: np.ndarray, counts: np.ndarray, key: int) -> np.ndarray:
    """Within-cell resampling with replacement, driven by stream ``key``.

    Draw order is one flat pass over cells in order, replicate slots in
    order; draw d selects source replicate ``d % n_i``.
    """
    values = np.ascontiguousarray(values, dtype=float)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    total = int(counts.sum())
    d = rng.draws(key, total)
    out = np.zeros_like(values)
    offset = 0
    for i, n in enumerate(counts):
        n = int(n)
        idx = (d[offset : offset + n] % np.uint64(n)).astype(np.int64)
        out[i, :n] = values[i, idx]
        offset += n
    return out


def fit_pair(
    values: np.ndarray,
    counts: np.ndarray,
    projector: np.ndarray,
    var_floor: float,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Cell moments then both surface fits through the OLS projector.

    Returns (mean coefficients, log-variance coefficients, floored flag).
    """
    ncells = counts.shape[0]
    ybar = np.empty(ncells)
    logvar = np.empty(ncells)
    floored = False
    for i in range(ncells):
        n = int(counts[i])
        y = values[i, :n]
        m = float(y.sum()) / n
        s2 = float(((y - m) ** 2).sum()) / (n - 1)
        if s2 < var_floor:
            s2 = var_floor
            floored = True
        ybar[i] = m
        logvar[i] = math.log(s2)
    return projector @ ybar, projector @ logvar, floored


def _grid(lower: np.ndarray, upper: np.ndarray, grid_pts: int):
    """Grid coordinates and their monomial matrix, cached per box."""
    cache_key = (grid_pts, lower.tobytes(), upper.tobytes())
    hit = _GRID_CACHE.get(cache_key)
    if hit is None:
        axes = []
        for j in range(lower.size):
            step = (upper[j] - lower[j]) / (grid_pts - 1)
            axis = lower[j] + np.arange(grid_pts) * step
            np.minimum(axis, upper[j], out=axis)
            axes.append(axis)
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        if len(_GRID_CACHE) > 16:
            _GRID_CACHE.clear()
        hit = (coords, monomial_matrix(coords))
        _GRID_CACHE[cache_key] = hit
    return hit


def _descend(objective, grad, x0, lower, upper,
             max_iter, grad_tol, step_tol, armijo_c, shrink):
    """Projected gradient descent with backtracking Armijo line search."""
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    fx = objective(x)
    capped = False
    for _ in range(max_iter):
        g = grad(x)
        pg = g.copy()
        pg[(x <= lower) & (g > 0)] = 0.0
        pg[(x >= upper) & (g < 0)] = 0.0
        if math.sqrt(float(pg @ pg)) <= grad_tol:
            break
        t = 1.0
        moved = False
        while t >= _LINESEARCH_MIN:
            xn = np.clip(x - t * g, lower, upper)
            dx = xn - x
            fn = objective(xn)
            if fn <= fx + armijo_c * float(g @ dx):
                moved = True
                break
            t *= shrink
        if not moved:
            break
        step = math.sqrt(float(dx @ dx))
        x, fx = xn, fn
        if step < step_tol:
            break
    else:
        capped = True
    return x, fx, capped


def two_stage(batch_objective, objective, grad, lower, upper, *,
              grid_pts, n_starts, max_iter, grad_tol, step_tol,
              armijo_c, shrink, tie_tol, extra_starts=(), descend=None):
    """Dense grid scan followed by descent from the best grid points.

    ``batch_objective(coords, monos)`` evaluates the whole grid;
    ``objective``/``grad`` evaluate single points during descent.  Ties
    within ``tie_tol`` of the best polished objective resolve to the
    lexicographically smallest coordinate vector.  ``descend`` swaps in a
    different polisher with the same signature as ``_descend``.
    """
    coords, monos = _grid(lower, upper, grid_pts)
    vals = batch_objective(coords, monos)
    if not np.all(np.isfinite(vals)):
        raise PathologicalSurfaceError("objective is non-finite on the search grid")
    order = np.argsort(vals, kind="stable")[: min(n_starts, vals.size)]
    starts = [coords[i] for i in order] + [np.asarray(s, dtype=float)
                                           for s in extra_starts]
    polish = _descend if descend is None else descend
    candidates = []
    any_capped = False
    for x0 in starts:
        x, fx, capped = polish(objective, grad, x0, lower, upper,
                               max_iter, grad_tol, step_tol, armijo_c, shrink)
        any_capped = any_capped or capped
        candidates.append((fx, x))
    fmin = min(fx for fx, _ in candidates)
    near = [(fx, x) for fx, x in candidates if fx <= fmin + tie_tol]
    near.sort(key=lambda c: tuple(c[1]))
    fx, x = near[0]
    return x, fx, any_capped


def _cross_pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i < j, in canonical cross-term order."""
    ii, jj = np.triu_indices(k, 1)
    return ii, jj


def _eval_quad(c: np.ndarray, x: np.ndarray, ii, jj) -> float:
    k = x.size
    v = c[0] + float(c[1 : 1 + k] @ x) + float(c[1 + k : 1 + 2 * k] @ (x * x))
    if ii.size:
        v += float(c[1 + 2 * k :] @ (x[ii] * x[jj]))
    return v


def _grad_quad(c: np.ndarray, x: np.ndarray, ii, jj) -> np.ndarray:
    k = x.size
    g = c[1 : 1 + k] + 2.0 * c[1 + k : 1 + 2 * k] * x
    if ii.size:
        cross = c[1 + 2 * k :]
        np.add.at(g, ii, cross * x[jj])
        np.add.at(g, jj, cross * x[ii])
    return g


def minimize_sql(mean_c, logvar_c, t0, lower, upper,
                 grid_pts, n_starts, max_iter, grad_tol, step_tol,
                 armijo_c, shrink, tie_tol, vlog_max):
    """Squared-loss minimization over the box.

    Returns ``(x, objective, status, capped)`` with status 0 on success
    and 1 when the objective overflowed or went non-finite.
    """
    mc = np.ascontiguousarray(mean_c, dtype=float)
    lc = np.ascontiguousarray(logvar_c, dtype=float)
    lower = np.ascontiguousarray(lower, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    k = lower.size
    ii, jj = _cross_pairs(k)

    def batch_objective(coords, monos):
        m = monos @ mc
        vl = monos @ lc
        if np.any(vl > vlog_max):
            raise PathologicalSurfaceError(
                "fitted log-variance exceeds the overflow guard on the grid")
        return (m - t0) ** 2 + np.exp(vl)

    def objective(x):
        m = _eval_quad(mc, x, ii, jj)
        vl = _eval_quad(lc, x, ii, jj)
        if vl > vlog_max or not math.isfinite(vl) or not math.isfinite(m):
            raise PathologicalSurfaceError("objective is non-finite")
        return (m - t0) ** 2 + math.exp(vl)

    def grad(x):
        m = _eval_quad(mc, x, ii, jj)
        vl = _eval_quad(lc, x, ii, jj)
        return (2.0 * (m - t0) * _grad_quad(mc, x, ii, jj)
                + math.exp(vl) * _grad_quad(lc, x, ii, jj))

    try:
        x, fx, capped = two_stage(
            batch_objective, objective, grad, lower, upper,
            grid_pts=grid_pts, n_starts=n_starts, max_iter=max_iter,
            grad_tol=grad_tol, step_tol=step_tol, armijo_c=armijo_c,
            shrink=shrink, tie_tol=tie_tol)
    except PathologicalSurfaceError:
        return np.full(k, np.nan), math.nan, 1, False
    return x, fx, 0, capped


def replicate_optimum(values, counts, projector, key, t0, lower, upper,
                      var_floor, grid_pts, n_starts, max_iter, grad_tol,
                      step_tol, armijo_c, shrink, tie_tol, vlog_max):
    """One full bootstrap unit: resample, refit, minimize.

    Returns ``(x, status, flags)``; flag bit 1 marks a floored variance,
    bit 2 a descent that hit the iteration cap.
    """
    resampled = resample(values, counts, key)
    mc, lc, floored = fit_pair(resampled, counts, projector, var_floor)
    x, _, status, capped = minimize_sql(
        mc, lc, t0, lower, upper, grid_pts, n_starts, max_iter,
        grad_tol, step_tol, armijo_c, shrink, tie_tol, vlog_max)
    flags = (1 if floored else 0) | (2 if capped else 0)
    return x, status, flags
