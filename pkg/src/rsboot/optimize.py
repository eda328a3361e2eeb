"""Optimum operating conditions over a box of factor levels.

Primary model: minimize the squared loss
``(M(x) - T0)^2 + exp(Vlog(x))`` over the box.  The alternative
dual-response model minimizes the predicted variance subject to the mean
holding the target (relaxed to a configurable tolerance band and solved
by quadratic-penalty continuation).  Neither objective is convex in
general, so the search is a dense grid scan followed by projected
gradient polishing of the best grid points; the grid makes the global
claim checkable against an independent dense-grid oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernel
from ._kernel import _pyfallback
from .errors import (InfeasibleError, PathologicalSurfaceError,
                     ValidationError)
from .surfaces import (QuadraticSurface, evaluate, evaluate_many, gradient,
                       hessian)

MODE_SQUARED_LOSS = "squared_loss"
MODE_DUAL_RESPONSE = "dual_response"

# Quadratic-penalty continuation weights for the dual-response target
# band.  Each stage minimizes variance + mu * excess^2; the final stage
# leaves at most O(1/mu) constraint overshoot.
_PENALTY_SCHEDULE = tuple(10.0 ** e for e in range(0, 13))

# Numerical overshoot allowed when checking feasibility afterwards.
_FEASIBILITY_SLACK = 1e-7

# Stage-solver settings.  The penalty objective's condition number grows
# with mu, where first-order descent stalls, so stages polish the grid
# candidates with projected Newton instead; the surfaces are quadratics
# with closed-form Hessians.
_NEWTON_MAX_ITER = 500
_NEWTON_GRAD_RTOL = 1e-9

DUAL_EQUALITY_TOL = 1e-3


@dataclass(frozen=True)
class Box:
    """Per-factor closed intervals [L_j, U_j] with L_j < U_j."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.bounds:
            raise ValidationError("box needs at least one factor")
        for j, (lo, hi) in enumerate(self.bounds):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError(
                    f"box axis {j + 1}: need finite lower < upper, "
                    f"got [{lo}, {hi}]")

    @classmethod
    def unit(cls, k: int) -> "Box":
        return cls(tuple((-1.0, 1.0) for _ in range(k)))

    @property
    def k(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def contains(self, x: Sequence[float]) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(x, self.bounds))

    def clip(self, x: Sequence[float]) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class OptimumResult:
    """Minimizer, its objective value, and the predicted responses there.

    For dual-response results ``objective`` records the squared-loss
    metric at the solution so the two modes are directly comparable;
    ``predicted_variance`` is the quantity the dual model minimized.
    """

    x_oc: tuple[float, ...]
    objective: float
    predicted_mean: float
    predicted_variance: float
    mode: str
    iteration_capped: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_SQUARED_LOSS, MODE_DUAL_RESPONSE):
            raise ValidationError(f"unknown optimizer mode {self.mode!r}")
        if self.predicted_variance < 0:
            raise PathologicalSurfaceError(
                f"predicted variance {self.predicted_variance} is negative "
                f"at the solution")


def _check_pair(mean_surface: QuadraticSurface, other: QuadraticSurface,
                box: Box) -> int:
    if mean_surface.k != other.k:
        raise ValidationError("mean and variance surfaces disagree on k")
    if box.k != mean_surface.k:
        raise ValidationError(
            f"box has {box.k} factor(s), surfaces have {mean_surface.k}")
    return mean_surface.k


def squared_loss_objective(mean_surface: QuadraticSurface,
                           logvar_surface: QuadraticSurface,
                           t0: float, x: Sequence[float]) -> float:
    """(M(x) - T0)^2 + exp(Vlog(x)) at a single point."""
    if mean_surface.k != logvar_surface.k:
        raise ValidationError("mean and variance surfaces disagree on k")
    m = evaluate(mean_surface, x)
    vlog = evaluate(logvar_surface, x)
    if vlog > _kernel.VLOG_MAX or not math.isfinite(vlog):
        raise PathologicalSurfaceError(
            f"fitted log-variance {vlog} at {tuple(x)} would overflow exp")
    return (m - t0) ** 2 + math.exp(vlog)


def minimize_squared_loss(mean_surface: QuadraticSurface,
                          logvar_surface: QuadraticSurface,
                          t0: float, box: Box,
                          *, backend=None) -> OptimumResult:
    """Global squared-loss minimizer over the box.

    Grid-seeded descent per the scheme in the package docs; the returned
    point is clamped to the box and beats every probed grid point.
    """
    _check_pair(mean_surface, logvar_surface, box)
    impl = _kernel.get_backend(None) if backend is None else backend
    x, _, status, capped = impl.minimize_sql(
        np.asarray(mean_surface.coefficients),
        np.asarray(logvar_surface.coefficients),
        float(t0), box.lower, box.upper,
        _kernel.GRID_POINTS, _kernel.N_STARTS, _kernel.MAX_ITER,
        _kernel.GRAD_TOL, _kernel.STEP_TOL, _kernel.ARMIJO_C,
        _kernel.BACKTRACK, _kernel.TIE_TOL, _kernel.VLOG_MAX)
    if status != 0:
        raise PathologicalSurfaceError(
            "squared-loss objective overflowed or went non-finite "
            "during the search")
    x = box.clip(x)
    pm = evaluate(mean_surface, x)
    pv = math.exp(evaluate(logvar_surface, x))
    return OptimumResult(
        x_oc=tuple(float(v) for v in x),
        objective=(pm - t0) ** 2 + pv,
        predicted_mean=pm,
        predicted_variance=pv,
        mode=MODE_SQUARED_LOSS,
        iteration_capped=capped,
    )


def _projected_newton(objective, grad, hess, x0, lower, upper,
                      step_tol, armijo_c, shrink):
    """Box-projected Newton with Armijo backtracking.

    Coordinates pressed against an active bound are frozen; the reduced
    Newton system is nudged positive definite when needed, and a plain
    projected-gradient step is the fallback when the Newton direction
    fails to descend.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    fx = objective(x)
    capped = False
    for _ in range(_NEWTON_MAX_ITER):
        g = grad(x)
        blocked = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        pg = np.where(blocked, 0.0, g)
        if math.sqrt(float(pg @ pg)) <= _NEWTON_GRAD_RTOL * (1.0 + abs(fx)):
            break
        free = ~blocked
        H = hess(x)[np.ix_(free, free)]
        eigenvalues = np.linalg.eigvalsh(H)
        bump = max(0.0, 1e-8 - float(eigenvalues.min()))
        d = np.zeros_like(x)
        d[free] = -np.linalg.solve(H + bump * np.eye(H.shape[0]), g[free])
        if float(g @ d) >= 0.0:
            d = -pg
        t = 1.0
        moved = False
        while t >= 1e-20:
            xn = np.clip(x + t * d, lower, upper)
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


def minimize_dual_response(mean_surface: QuadraticSurface,
                           var_surface: QuadraticSurface,
                           t0: float, box: Box,
                           *, variance_scale: str = "log",
                           equality_tol: float = DUAL_EQUALITY_TOL) -> OptimumResult:
    """Minimize predicted variance holding the mean at the target.

    The target equality is relaxed to ``|M(x) - T0| <= equality_tol`` and
    enforced by quadratic-penalty continuation.  ``variance_scale`` says
    how to read ``var_surface``: ``"log"`` (variance is exp of it) or
    ``"direct"`` (it predicts the variance itself).

    Raises InfeasibleError when no point in the box meets the tolerance.
    """
    _check_pair(mean_surface, var_surface, box)
    if variance_scale not in ("log", "direct"):
        raise ValidationError(f"unknown variance scale {variance_scale!r}")
    if equality_tol <= 0:
        raise ValidationError("equality tolerance must be positive")
    log_scale = variance_scale == "log"
    mc = np.asarray(mean_surface.coefficients)
    vc = np.asarray(var_surface.coefficients)
    lower, upper = box.lower, box.upper

    def variance_at(x) -> float:
        v = evaluate(var_surface, x)
        if log_scale:
            if v > _kernel.VLOG_MAX or not math.isfinite(v):
                raise PathologicalSurfaceError(
                    f"fitted log-variance {v} would overflow exp")
            return math.exp(v)
        return v

    mean_hess = hessian(mean_surface)
    var_hess = hessian(var_surface)

    def make_stage(mu):
        def batch(coords, monos):
            m = monos @ mc
            v = monos @ vc
            if log_scale:
                if np.any(v > _kernel.VLOG_MAX):
                    raise PathologicalSurfaceError(
                        "fitted log-variance overflows exp on the grid")
                v = np.exp(v)
            excess = np.maximum(np.abs(m - t0) - equality_tol, 0.0)
            return v + mu * excess ** 2

        def f(x):
            m = evaluate(mean_surface, x)
            excess = max(abs(m - t0) - equality_tol, 0.0)
            return variance_at(x) + mu * excess ** 2

        def g(x):
            m = evaluate(mean_surface, x)
            gv = gradient(var_surface, x)
            if log_scale:
                gv = variance_at(x) * gv
            excess = max(abs(m - t0) - equality_tol, 0.0)
            if excess > 0.0:
                gv = gv + 2.0 * mu * excess * math.copysign(1.0, m - t0) \
                    * gradient(mean_surface, x)
            return gv

        def h(x):
            if log_scale:
                gvl = gradient(var_surface, x)
                hv = variance_at(x) * (np.outer(gvl, gvl) + var_hess)
            else:
                hv = var_hess.copy()
            m = evaluate(mean_surface, x)
            excess = max(abs(m - t0) - equality_tol, 0.0)
            if excess > 0.0:
                gm = gradient(mean_surface, x)
                hv = hv + 2.0 * mu * (np.outer(gm, gm)
                                      + excess * math.copysign(1.0, m - t0)
                                      * mean_hess)
            return hv

        return batch, f, g, h

    x = None
    capped = False
    for mu in _PENALTY_SCHEDULE:
        batch, f, g, h = make_stage(mu)

        def polish(objective, grad_fn, x0, lo, up, _max_iter, _grad_tol,
                   step_tol, armijo_c, shrink, h=h):
            return _projected_newton(objective, grad_fn, h, x0, lo, up,
                                     step_tol, armijo_c, shrink)

        extra = () if x is None else (x,)
        x, _, cap = _pyfallback.two_stage(
            batch, f, g, lower, upper,
            grid_pts=_kernel.GRID_POINTS, n_starts=_kernel.N_STARTS,
            max_iter=_kernel.MAX_ITER, grad_tol=_kernel.GRAD_TOL,
            step_tol=_kernel.STEP_TOL, armijo_c=_kernel.ARMIJO_C,
            shrink=_kernel.BACKTRACK, tie_tol=_kernel.TIE_TOL,
            extra_starts=extra, descend=polish)
        capped = capped or cap

    x = box.clip(x)
    pm = evaluate(mean_surface, x)
    if abs(pm - t0) > equality_tol + _FEASIBILITY_SLACK:
        raise InfeasibleError(
            f"no point in the box holds the mean within {equality_tol} of "
            f"the target (best residual {abs(pm - t0):.6g}); widen the box "
            f"or use squared-loss mode")
    pv = variance_at(x)
    return OptimumResult(
        x_oc=tuple(float(v) for v in x),
        objective=(pm - t0) ** 2 + pv,
        predicted_mean=pm,
        predicted_variance=pv,
        mode=MODE_DUAL_RESPONSE,
        iteration_capped=capped,
    )


def grid_objective_values(mean_surface: QuadraticSurface,
                          logvar_surface: QuadraticSurface,
                          t0: float, box: Box, pts_per_axis: int) -> np.ndarray:
    """Squared-loss values on a dense grid (oracle/diagnostic helper)."""
    axes = [np.linspace(lo, hi, pts_per_axis) for lo, hi in box.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    m = evaluate_many(mean_surface, coords)
    vl = evaluate_many(logvar_surface, coords)
    return (m - t0) ** 2 + np.exp(vl)
