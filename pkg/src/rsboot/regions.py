"""Confidence intervals and joint confidence regions from an ensemble.

Two joint regions over the optimum coordinates: a Bonferroni rectangle
built from per-axis basic-bootstrap intervals (error rates summing to the
joint rate), and an ellipse centered at the point estimate whose radius
is the bootstrap quantile of the studentized quadratic form q*.  Boundary
conventions are fixed for testability: rectangle edges are inside the
region, the ellipse boundary is outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import BootstrapEnsemble, _apply_ridge, quantile_index
from .errors import ConfigError, SingularCovarianceError, ValidationError

METHOD_BASIC = "basic_bootstrap"


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: float
    method: str = METHOD_BASIC

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError(
                f"interval bounds out of order: ({self.lower}, {self.upper})")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("interval level must be in (0, 1)")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class RectangularRegion:
    """Cartesian product of per-axis intervals (closed boundary)."""

    intervals: tuple[Interval, ...]
    joint_level: float

    @property
    def k(self) -> int:
        return len(self.intervals)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.k,):
            raise ValidationError(
                f"point has shape {theta.shape}, region expects ({self.k},)")
        return all(iv.contains(v) for iv, v in zip(self.intervals, theta))


@dataclass(frozen=True)
class EllipticalRegion:
    """{theta : (t - theta)' Sigma^-1 (t - theta) < radius_sq} (open)."""

    center: tuple[float, ...]
    sigma: tuple[tuple[float, ...], ...]
    sigma_inv: tuple[tuple[float, ...], ...]
    radius_sq: float
    level: float

    def __post_init__(self):
        if self.radius_sq <= 0:
            raise ValidationError(
                f"ellipse radius^2 must be positive, got {self.radius_sq}")

    @property
    def k(self) -> int:
        return len(self.center)

    def quadratic_form(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.k,):
            raise ValidationError(
                f"point has shape {theta.shape}, region expects ({self.k},)")
        d = np.asarray(self.center) - theta
        return float(d @ np.asarray(self.sigma_inv) @ d)

    def contains(self, theta) -> bool:
        return self.quadratic_form(theta) < self.radius_sq


@dataclass(frozen=True)
class BiasReport:
    coordinate_biases: tuple[float, ...]
    mean_response_bias: float


def basic_interval(t: float, t_stars, alpha_axis: float) -> Interval:
    """Equi-tailed basic bootstrap interval around the point estimate t.

    Endpoints are ``2t - t*_[(B+1)(1-a/2)]`` and ``2t - t*_[(B+1)a/2]``
    with 1-based indices into the ascending-sorted replicate values, so a
    right-skewed replicate distribution shifts the interval left.
    """
    stars = np.sort(np.asarray(t_stars, dtype=float))
    B = stars.size
    lo_idx = quantile_index(B, alpha_axis / 2)
    hi_idx = quantile_index(B, 1 - alpha_axis / 2)
    return Interval(
        lower=2 * t - float(stars[hi_idx - 1]),
        upper=2 * t - float(stars[lo_idx - 1]),
        level=1 - alpha_axis,
    )


def bonferroni_region(t, ensemble: BootstrapEnsemble,
                      alpha: float) -> RectangularRegion:
    """Joint rectangle from per-axis basic intervals at alpha/k each.

    The union bound makes the joint coverage at least 1 - alpha.
    """
    t = np.asarray(t, dtype=float)
    k = ensemble.k
    if t.shape != (k,):
        raise ValidationError(f"t has shape {t.shape}, expected ({k},)")
    optima = ensemble.optima()
    alpha_axis = alpha / k
    intervals = tuple(
        basic_interval(float(t[i]), optima[:, i], alpha_axis)
        for i in range(k))
    return RectangularRegion(intervals=intervals, joint_level=1 - alpha)


def ellipse_region(ensemble: BootstrapEnsemble, alpha: float) -> EllipticalRegion:
    """Normal-approximation ellipse calibrated by the q* quantile.

    Center: the original-sample optimum.  Shape: inverse of the outer
    covariance of the B replicate optima.  Radius^2: ascending-ordered q*
    at index (B+1)(1-alpha).
    """
    q_stars = ensemble.q_stars()
    if q_stars is None:
        raise ConfigError(
            "ellipse calibration needs q* from every replicate; rerun the "
            "bootstrap with run_inner enabled")
    idx = quantile_index(ensemble.B, 1 - alpha)
    radius_sq = float(np.sort(q_stars)[idx - 1])
    sigma = np.asarray(ensemble.outer_covariance, dtype=float)
    ridged_sigma, _ = _apply_ridge(sigma)
    try:
        sigma_inv = np.linalg.inv(ridged_sigma)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "outer covariance is singular even after the ridge "
            "adjustment") from None
    sigma_inv = (sigma_inv + sigma_inv.T) / 2.0
    return EllipticalRegion(
        center=ensemble.point_estimate,
        sigma=tuple(tuple(float(v) for v in row) for row in sigma),
        sigma_inv=tuple(tuple(float(v) for v in row) for row in sigma_inv),
        radius_sq=radius_sq,
        level=1 - alpha,
    )


def region_membership(region, theta) -> bool:
    """Is theta inside the region?  Rectangle edges count as inside;
    the ellipse boundary (quadratic form == radius^2) counts as outside."""
    if isinstance(region, (RectangularRegion, EllipticalRegion)):
        return region.contains(theta)
    raise ValidationError(f"unsupported region type {type(region).__name__}")


def bias_report(ensemble: BootstrapEnsemble,
                m_hat_at_optimum: float) -> BiasReport:
    """Bootstrap biases: replicate means minus original-sample values."""
    mean_bias = float(ensemble.mean_responses().mean()) - m_hat_at_optimum
    return BiasReport(
        coordinate_biases=ensemble.biases,
        mean_response_bias=mean_bias,
    )
