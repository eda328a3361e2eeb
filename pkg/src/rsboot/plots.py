"""SVG figures for two-factor analyses.

Three files: the replicate scatter with both confidence regions overlaid,
a blowup of the scatter with marginal histograms and kernel densities,
and the histogram of the bootstrap mean responses with the interval
endpoints marked.  The drawn geometry comes straight from the report's
region objects; styling choices (Silverman bandwidth, Freedman-Diaconis
bins) are illustrative only and never acceptance-tested.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bootstrap import BootstrapEnsemble  # noqa: E402
from .errors import UnsupportedPlotError, ValidationError  # noqa: E402
from .regions import EllipticalRegion, RectangularRegion  # noqa: E402
from .report import Report  # noqa: E402

_SVG_META = {"Date": None}  # keep SVG output independent of wall time


def ellipse_boundary(region: EllipticalRegion, n: int = 256) -> np.ndarray:
    """Points on the ellipse boundary: quadratic form == radius^2.

    Parametrized as center + sqrt(radius_sq) * L @ (cos, sin) with L the
    Cholesky factor of sigma, which maps the unit circle onto the level
    set of the quadratic form.
    """
    sigma = np.asarray(region.sigma, dtype=float)
    L = np.linalg.cholesky(sigma)
    phi = np.linspace(0.0, 2.0 * math.pi, n)
    circle = np.stack([np.cos(phi), np.sin(phi)])
    return (np.asarray(region.center)[:, None]
            + math.sqrt(region.radius_sq) * (L @ circle)).T


def silverman_bandwidth(values: np.ndarray) -> float:
    """Rule-of-thumb Gaussian kernel bandwidth; 0 for degenerate data."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return 0.0
    sd = float(values.std(ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * scale * n ** (-1 / 5)


def gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density of ``values`` evaluated on ``grid``."""
    bw = silverman_bandwidth(values)
    if bw <= 0:
        return np.zeros_like(grid)
    z = (grid[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * z * z).sum(axis=1) / (values.size * bw
                                               * math.sqrt(2 * math.pi))


def freedman_diaconis_bins(values: np.ndarray) -> int:
    values = np.asarray(values, dtype=float)
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    span = float(values.max() - values.min())
    if iqr <= 0 or span <= 0:
        return 10
    width = 2 * iqr * values.size ** (-1 / 3)
    return max(1, math.ceil(span / width))


def _draw_regions(ax, rectangle: RectangularRegion | None,
                  ellipse: EllipticalRegion | None, center) -> None:
    if rectangle is not None:
        x_iv, y_iv = rectangle.intervals
        ax.add_patch(plt.Rectangle(
            (x_iv.lower, y_iv.lower), x_iv.width, y_iv.width,
            fill=False, edgecolor="tab:red", linewidth=1.2,
            label=f"{rectangle.joint_level:.0%} rectangle"))
    if ellipse is not None:
        boundary = ellipse_boundary(ellipse)
        ax.plot(boundary[:, 0], boundary[:, 1], color="tab:blue",
                linewidth=1.2, label=f"{ellipse.level:.0%} ellipse")
    ax.axvline(center[0], color="black", linestyle=":", linewidth=0.9)
    ax.axhline(center[1], color="black", linestyle=":", linewidth=0.9)


def emit_plots(report: Report, ensemble: BootstrapEnsemble,
               out_dir) -> list[Path]:
    """Write scatter.svg, scatter_margins.svg, and mean_hist.svg.

    Only two-factor analyses can be drawn; anything else raises
    UnsupportedPlotError (the report itself stays valid).
    """
    if ensemble.k != 2:
        raise UnsupportedPlotError(
            f"plots support exactly 2 factors, data has {ensemble.k}")
    if report.optimum is None:
        raise ValidationError("plots need a report with an optimum result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    optima = ensemble.optima()
    center = report.optimum.x_oc
    paths = []

    # Full scatter with the region overlays.
    fig, ax = plt.subplots(figsize=(6.4, 6.0))
    ax.scatter(optima[:, 0], optima[:, 1], s=6, alpha=0.45,
               color="tab:gray", label="bootstrap optima")
    _draw_regions(ax, report.rectangle, report.ellipse, center)
    ax.set_xlabel("x1 optimum")
    ax.set_ylabel("x2 optimum")
    ax.set_title("Bootstrap optimum operating conditions")
    ax.legend(loc="best", fontsize=8)
    path = out_dir / "scatter.svg"
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)
    paths.append(path)

    # Blowup with marginal histograms and kernel densities.
    fig = plt.figure(figsize=(7.0, 7.0))
    gs = fig.add_gridspec(2, 2, width_ratios=(4, 1), height_ratios=(1, 4),
                          hspace=0.05, wspace=0.05)
    ax_main = fig.add_subplot(gs[1, 0])
    ax_top = fig.add_subplot(gs[0, 0], sharex=ax_main)
    ax_right = fig.add_subplot(gs[1, 1], sharey=ax_main)
    ax_main.scatter(optima[:, 0], optima[:, 1], s=6, alpha=0.45,
                    color="tab:gray")
    _draw_regions(ax_main, report.rectangle, report.ellipse, center)
    for axis, data, ax_h, orientation in (
            (0, optima[:, 0], ax_top, "vertical"),
            (1, optima[:, 1], ax_right, "horizontal")):
        bins = freedman_diaconis_bins(data)
        ax_h.hist(data, bins=bins, density=True, orientation=orientation,
                  color="tab:gray", alpha=0.6)
        span = data.max() - data.min()
        if span > 0:
            grid = np.linspace(data.min() - 0.1 * span,
                               data.max() + 0.1 * span, 200)
            density = gaussian_kde(data, grid)
            if orientation == "vertical":
                ax_h.plot(grid, density, color="tab:blue", linewidth=1.0)
            else:
                ax_h.plot(density, grid, color="tab:blue", linewidth=1.0)
    ax_top.tick_params(labelbottom=False)
    ax_right.tick_params(labelleft=False)
    ax_main.set_xlabel("x1 optimum")
    ax_main.set_ylabel("x2 optimum")
    path = out_dir / "scatter_margins.svg"
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)
    paths.append(path)

    # Histogram of the bootstrap mean responses.
    responses = ensemble.mean_responses()
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    ax.hist(responses, bins=freedman_diaconis_bins(responses),
            color="tab:gray", alpha=0.7)
    ax.axvline(report.optimum.predicted_mean, color="black",
               linestyle="--", linewidth=1.2, label="original estimate")
    if report.mean_response_interval is not None:
        iv = report.mean_response_interval
        ax.axvline(iv.lower, color="tab:red", linestyle=":", linewidth=1.1,
                   label=f"{iv.level:.0%} interval")
        ax.axvline(iv.upper, color="tab:red", linestyle=":", linewidth=1.1)
    ax.set_xlabel("mean response at the replicate optimum")
    ax.set_ylabel("count")
    ax.set_title("Bootstrap mean responses")
    ax.legend(loc="best", fontsize=8)
    path = out_dir / "mean_hist.svg"
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)
    paths.append(path)
    return paths
