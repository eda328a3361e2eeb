"""Bootstrap resampling of the whole fit-and-optimize pipeline.

Outer loop: B times, resample every cell with replacement, refit both
surfaces, re-minimize the squared loss.  Inner loop (per outer replicate,
when enabled): I second-level resamples of the bootstrap dataset whose
re-optimized optima estimate that replicate's covariance, feeding the
studentized quadratic form q* used to calibrate the elliptical region.

Replicates are independent work units keyed by (seed, replicate, attempt,
inner replicate) sub-streams, so any number of worker threads produces
byte-identical results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernel, rng
from .design import VARIANCE_FLOOR, DesignCell, DesignTable, summarize
from .errors import BootstrapError, ConfigError, SingularCovarianceError, ValidationError
from .optimize import Box, OptimumResult, minimize_squared_loss
from .surfaces import fit_ols, monomial_matrix, ols_projector

# Failed units get a fresh sub-stream this many times before the run aborts.
MAX_RETRIES = 10

# Ridge rule: covariance eigenvalues below this fraction of the trace get
# the same fraction of the trace added to the diagonal before inversion.
RIDGE_RTOL = 1e-10


def quantile_index(B: int, p: float) -> int:
    """1-based ordered-value index (B+1)*p, required to be integral.

    The quantile convention takes the (B+1)p-th order statistic exactly;
    no interpolation is ever applied, so a non-integral index is a
    configuration error.
    """
    raw = (B + 1) * p
    idx = round(raw)
    if abs(raw - idx) > 1e-6:
        raise ConfigError(
            f"(B+1)*p must be an integer to take an ordered value: "
            f"B={B}, p={p} gives {raw}")
    if not 1 <= idx <= B:
        raise ConfigError(
            f"ordered-value index {idx} out of range [1, {B}] "
            f"for B={B}, p={p}")
    return int(idx)


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication counts, seed, and level for one bootstrap run."""

    B: int
    I: int
    seed: int
    alpha: float
    run_inner: bool = True

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError("B must be a positive integer")
        if self.I < 1:
            raise ConfigError("I must be a positive integer")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie strictly between 0 and 1")
        if not 0 <= self.seed <= 0xFFFFFFFFFFFFFFFF:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    def validate(self, k: int) -> list[str]:
        """Check every quantile index the run will take; returns warnings.

        Raises ConfigError on any non-integral or out-of-range index so
        that bad configurations die before any computation.
        """
        for p in (self.alpha / 2, 1 - self.alpha / 2, 1 - self.alpha,
                  self.alpha / (2 * k), 1 - self.alpha / (2 * k)):
            quantile_index(self.B, p)
        warnings = []
        if self.run_inner and not 50 <= self.I <= 200:
            warnings.append(
                f"inner replicate count I={self.I} is outside the "
                f"customary range [50, 200]")
        return warnings


@dataclass(frozen=True)
class BootstrapReplicate:
    """One simulated optimum plus its inner-bootstrap covariance."""

    index: int
    x_oc_star: tuple[float, ...]
    mean_at_optimum: float
    inner_covariance: tuple[tuple[float, ...], ...] | None = None
    q_star: float | None = None

    def __post_init__(self):
        if self.q_star is not None and self.q_star < 0:
            raise ValidationError(f"q* must be non-negative, got {self.q_star}")
        if self.inner_covariance is not None:
            cov = np.asarray(self.inner_covariance)
            if not np.array_equal(cov, cov.T):
                raise ValidationError("inner covariance must be symmetric")


@dataclass(frozen=True)
class BootstrapEnsemble:
    """All B replicates plus the original-sample point estimate."""

    replicates: tuple[BootstrapReplicate, ...]
    point_estimate: tuple[float, ...]
    outer_covariance: tuple[tuple[float, ...], ...]
    biases: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    @property
    def B(self) -> int:
        return len(self.replicates)

    @property
    def k(self) -> int:
        return len(self.point_estimate)

    def optima(self) -> np.ndarray:
        return np.array([r.x_oc_star for r in self.replicates])

    def mean_responses(self) -> np.ndarray:
        return np.array([r.mean_at_optimum for r in self.replicates])

    def q_stars(self) -> np.ndarray | None:
        if any(r.q_star is None for r in self.replicates):
            return None
        return np.array([r.q_star for r in self.replicates])


def resolve_workers(explicit: int | None = None) -> int:
    """Worker-thread count: explicit request capped by RSBOOT_THREADS.

    The cap (0 or unset means automatic) never changes numeric output,
    only scheduling.
    """
    if explicit is not None and explicit < 1:
        raise ConfigError("worker count must be at least 1")
    base = explicit if explicit is not None else (os.cpu_count() or 1)
    cap_env = os.environ.get("RSBOOT_THREADS", "").strip()
    if cap_env:
        try:
            cap = int(cap_env)
        except ValueError:
            raise ConfigError(
                f"RSBOOT_THREADS must be an integer, got {cap_env!r}") from None
        if cap < 0:
            raise ConfigError("RSBOOT_THREADS must be non-negative")
        if cap > 0:
            base = min(base, cap)
    return max(1, base)


def resample_table(table: DesignTable, rng_stream: rng.Stream) -> DesignTable:
    """Resample every cell with replacement from its own replicates.

    Design points and cell order are unchanged; draws come from the given
    stream in one flat pass (cells in order, slots in order).
    """
    cells = []
    for cell in table.cells:
        idx = rng_stream.indices(cell.n, cell.n)
        cells.append(DesignCell(cell.point,
                                tuple(cell.replicates[i] for i in idx)))
    return DesignTable(cells=tuple(cells), k=table.k, target=table.target,
                       level_box=table.level_box)


def _apply_ridge(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    trace = float(np.trace(cov))
    eigenvalues = np.linalg.eigvalsh(cov)
    if eigenvalues.min() < RIDGE_RTOL * trace:
        return cov + np.eye(cov.shape[0]) * (RIDGE_RTOL * trace), True
    return cov, False


def _q_form(displacement: np.ndarray, cov: np.ndarray) -> tuple[float, bool]:
    cov, ridged = _apply_ridge(cov)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "covariance is not positive definite even after the ridge "
            "adjustment") from None
    z = np.linalg.solve(L, displacement)
    return float(z @ z), ridged


def q_statistic(center, point, covariance) -> float:
    """Mahalanobis-type quadratic form (point-center)' Cov^-1 (point-center)."""
    center = np.asarray(center, dtype=float)
    point = np.asarray(point, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    if center.shape != point.shape or cov.shape != (center.size, center.size):
        raise ValidationError("center, point, and covariance shapes disagree")
    q, _ = _q_form(point - center, cov)
    return q


def _minimize_params() -> tuple:
    return (_kernel.GRID_POINTS, _kernel.N_STARTS, _kernel.MAX_ITER,
            _kernel.GRAD_TOL, _kernel.STEP_TOL, _kernel.ARMIJO_C,
            _kernel.BACKTRACK, _kernel.TIE_TOL, _kernel.VLOG_MAX)


def _inner_covariance(boot_values, counts, projector, t0, lower, upper,
                      inner_count, node_key, impl):
    """Covariance of inner-resample optima around their own mean."""
    k = lower.size
    optima = np.empty((inner_count, k))
    floored = capped = False
    retries = 0
    params = _minimize_params()
    for i in range(1, inner_count + 1):
        inner_key = rng.derive(node_key, i)
        for attempt in range(MAX_RETRIES + 1):
            draw_key = rng.derive(inner_key, attempt)
            x, status, flags = impl.replicate_optimum(
                boot_values, counts, projector, draw_key, t0, lower, upper,
                VARIANCE_FLOOR, *params)
            if status == 0:
                break
        else:
            raise BootstrapError(
                f"inner replicate i={i} failed after {MAX_RETRIES} retries")
        retries += attempt
        optima[i - 1] = np.clip(x, lower, upper)
        floored = floored or bool(flags & _kernel.FLAG_VARIANCE_FLOORED)
        capped = capped or bool(flags & _kernel.FLAG_ITERATION_CAPPED)
    if inner_count < 2:
        cov = np.zeros((k, k))
    else:
        centered = optima - optima.mean(axis=0)
        cov = centered.T @ centered / (inner_count - 1)
        cov = (cov + cov.T) / 2.0
    return cov, optima, floored, capped, retries


def double_bootstrap_covariance(boot_table: DesignTable, t0: float, box: Box,
                                inner_count: int, rng_stream: rng.Stream,
                                *, backend=None) -> np.ndarray:
    """Second-level bootstrap covariance of the optimum estimator.

    Draws ``inner_count`` resamples of ``boot_table`` (itself usually a
    first-level bootstrap dataset), re-optimizes each, and returns the
    sample covariance (divisor I-1) of the optima around their own mean.
    """
    if box.k != boot_table.k:
        raise ValidationError("box and table disagree on the factor count")
    impl = _kernel.get_backend(None) if backend is None else backend
    values, counts = boot_table.padded_values()
    projector = ols_projector(boot_table.points)
    cov, _, _, _, _ = _inner_covariance(
        values, counts, projector, t0, box.lower, box.upper,
        inner_count, rng_stream.key, impl)
    return cov


def run_bootstrap(table: DesignTable, t0: float, box: Box,
                  config: BootstrapConfig, *, workers: int | None = None,
                  backend=None) -> BootstrapEnsemble:
    """Execute the full outer (and optional inner) bootstrap.

    Returns the ensemble of B simulated optima, their covariance, and the
    per-coordinate biases.  Deterministic for a fixed config regardless
    of ``workers``.
    """
    if box.k != table.k:
        raise ValidationError("box and table disagree on the factor count")
    impl = _kernel.get_backend(None) if backend is None else backend
    summaries = summarize(table)
    points = table.points
    mean_surface, _ = fit_ols(points, [s.mean for s in summaries])
    logvar_surface, _ = fit_ols(points, [s.log_variance for s in summaries])
    origin: OptimumResult = minimize_squared_loss(
        mean_surface, logvar_surface, t0, box, backend=impl)
    t = np.asarray(origin.x_oc)

    projector = ols_projector(points)
    values, counts = table.padded_values()
    lower, upper = box.lower, box.upper
    root = rng.root_key(config.seed)
    B, k = config.B, table.k
    params = _minimize_params()

    xs = np.empty((B, k))
    ms = np.empty(B)
    covs = np.empty((B, k, k)) if config.run_inner else None
    qs = np.empty(B) if config.run_inner else None
    floored = np.zeros(B, dtype=bool)
    capped = np.zeros(B, dtype=bool)
    ridged = np.zeros(B, dtype=bool)
    retries = np.zeros(B, dtype=np.int64)

    def job(b: int) -> None:
        rep_key = rng.derive(root, b)
        last_error: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            attempt_key = rng.derive(rep_key, attempt)
            draw_key = rng.derive(attempt_key, 0)
            resampled = impl.resample(values, counts, draw_key)
            mean_c, logvar_c, unit_floored = impl.fit_pair(
                resampled, counts, projector, VARIANCE_FLOOR)
            x, _, status, unit_capped = impl.minimize_sql(
                mean_c, logvar_c, t0, lower, upper, *params)
            if status != 0:
                last_error = BootstrapError("objective went non-finite")
                continue
            x = np.clip(x, lower, upper)
            if config.run_inner:
                try:
                    cov, _, in_floored, in_capped, in_retries = \
                        _inner_covariance(resampled, counts, projector, t0,
                                          lower, upper, config.I,
                                          attempt_key, impl)
                    q, unit_ridged = _q_form(x - t, cov)
                except SingularCovarianceError as exc:
                    last_error = exc
                    continue
                covs[b - 1] = cov
                qs[b - 1] = q
                ridged[b - 1] = unit_ridged
                unit_floored = unit_floored or in_floored
                unit_capped = unit_capped or in_capped
                retries[b - 1] += in_retries
            xs[b - 1] = x
            ms[b - 1] = float(monomial_matrix(x[None, :])[0] @ mean_c)
            floored[b - 1] = unit_floored
            capped[b - 1] = unit_capped
            retries[b - 1] += attempt
            return
        raise BootstrapError(
            f"replicate b={b} failed after {MAX_RETRIES} retries: "
            f"{last_error}")

    n_workers = resolve_workers(workers)
    if n_workers == 1:
        for b in range(1, B + 1):
            job(b)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = {b: pool.submit(job, b) for b in range(1, B + 1)}
            errors = [(b, f.exception()) for b, f in futures.items()
                      if f.exception() is not None]
            if errors:
                raise min(errors)[1]

    if B < 2:
        outer_cov = np.zeros((k, k))
    else:
        centered = xs - xs.mean(axis=0)
        outer_cov = centered.T @ centered / (B - 1)
        outer_cov = (outer_cov + outer_cov.T) / 2.0
    biases = xs.mean(axis=0) - t

    warnings = []
    if floored.any():
        warnings.append(
            f"variance floor applied while refitting "
            f"{int(floored.sum())} of {B} replicates")
    if capped.any():
        warnings.append(
            f"descent iteration cap reached in {int(capped.sum())} of {B} "
            f"replicates")
    if ridged.any():
        warnings.append(
            f"ridge regularization applied to {int(ridged.sum())} of {B} "
            f"inner covariance matrices")
    for b in np.nonzero(retries)[0]:
        warnings.append(f"replicate b={b + 1} needed {int(retries[b])} "
                        f"retried sub-stream(s)")
    if origin.iteration_capped:
        warnings.append("descent iteration cap reached on the original sample")

    replicates = tuple(
        BootstrapReplicate(
            index=b,
            x_oc_star=tuple(float(v) for v in xs[b - 1]),
            mean_at_optimum=float(ms[b - 1]),
            inner_covariance=(tuple(tuple(float(v) for v in row)
                                    for row in covs[b - 1])
                              if config.run_inner else None),
            q_star=float(qs[b - 1]) if config.run_inner else None,
        )
        for b in range(1, B + 1)
    )
    return BootstrapEnsemble(
        replicates=replicates,
        point_estimate=tuple(float(v) for v in t),
        outer_covariance=tuple(tuple(float(v) for v in row)
                               for row in outer_cov),
        biases=tuple(float(v) for v in biases),
        warnings=tuple(warnings),
    )
