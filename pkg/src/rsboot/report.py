"""End-to-end pipeline orchestration and report (de)serialization.

``execute`` runs parse -> summarize -> fit -> optimize -> bootstrap ->
regions and assembles a Report; every stage failure is wrapped with the
stage name so the CLI can map it to a distinct exit code.  The report
serializes to JSON losslessly (parse(serialize(r)) == r) and the
replicate stream serializes to a flat CSV.
"""

from __future__ import annotations

import csv
import json
from contextlib import contextmanager
from dataclasses import dataclass

from .bootstrap import (BootstrapConfig, BootstrapEnsemble, quantile_index,
                        run_bootstrap)
from .design import CellSummary, CodingSpec, load_design_table, summarize
from .errors import ConfigError, RsbootError
from .optimize import (MODE_DUAL_RESPONSE, MODE_SQUARED_LOSS, Box,
                       OptimumResult, minimize_dual_response,
                       minimize_squared_loss)
from .regions import (BiasReport, EllipticalRegion, Interval,
                      RectangularRegion, basic_interval, bias_report,
                      bonferroni_region, ellipse_region)
from .surfaces import QuadraticSurface, fit_ols
from ._kernel import backend_name

TOOL_NAME = "rsboot"
TOOL_VERSION = "0.1.0"

VALID_MODES = (MODE_SQUARED_LOSS, MODE_DUAL_RESPONSE)
VALID_EMIT = ("report", "replicates", "plots")

# How far the pipeline runs: surfaces only, plus optimization, or the
# full bootstrap analysis.
LEVEL_FIT = "fit"
LEVEL_OPTIMIZE = "optimize"
LEVEL_ANALYZE = "analyze"


class StageFailure(RsbootError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        super().__init__(f"{stage}: {error}")


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(name, exc) from exc


@dataclass(frozen=True)
class RunConfig:
    """Everything one batch run needs; mirrors the CLI flags."""

    data_path: str
    target: float
    box: tuple[tuple[float, float], ...] | None = None
    alpha: float = 0.10
    B: int = 999
    I: int = 100
    seed: int = 0
    modes: tuple[str, ...] = (MODE_SQUARED_LOSS,)
    emit: tuple[str, ...] = VALID_EMIT
    out_dir: str = "."
    run_inner: bool = True
    dual_equality_tol: float = 1e-3
    coding: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        for mode in self.modes:
            if mode not in VALID_MODES:
                raise ConfigError(f"unknown mode {mode!r}; "
                                  f"valid modes: {VALID_MODES}")
        if MODE_SQUARED_LOSS not in self.modes:
            raise ConfigError("the squared_loss mode is always required; "
                              "dual_response can only be added to it")
        for item in self.emit:
            if item not in VALID_EMIT:
                raise ConfigError(f"unknown emit target {item!r}; "
                                  f"valid targets: {VALID_EMIT}")

    def bootstrap_config(self) -> BootstrapConfig:
        return BootstrapConfig(B=self.B, I=self.I, seed=self.seed,
                               alpha=self.alpha, run_inner=self.run_inner)

    def coding_spec(self) -> CodingSpec | None:
        if self.coding is None:
            return None
        return CodingSpec(centers=tuple(c for c, _ in self.coding),
                          half_ranges=tuple(h for _, h in self.coding))


@dataclass(frozen=True)
class EnsembleSummary:
    """The ensemble quantities that belong in the report JSON."""

    B: int
    I: int
    seed: int
    point_estimate: tuple[float, ...]
    outer_covariance: tuple[tuple[float, ...], ...]
    biases: tuple[float, ...]


@dataclass(frozen=True)
class Report:
    tool: str
    version: str
    backend: str
    config: RunConfig
    warnings: tuple[str, ...]
    cells: tuple[CellSummary, ...]
    mean_surface: QuadraticSurface | None = None
    logvar_surface: QuadraticSurface | None = None
    optimum: OptimumResult | None = None
    dual_optimum: OptimumResult | None = None
    ensemble: EnsembleSummary | None = None
    rectangle: RectangularRegion | None = None
    ellipse: EllipticalRegion | None = None
    mean_response_interval: Interval | None = None
    bias: BiasReport | None = None

    def to_dict(self) -> dict:
        return _report_to_dict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "Report":
        return _report_from_dict(payload)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return _report_from_dict(json.loads(text))


def execute(config: RunConfig, level: str = LEVEL_ANALYZE,
            *, workers: int | None = None,
            backend=None) -> tuple[Report, BootstrapEnsemble | None]:
    """Run the pipeline through ``level`` and return (report, ensemble).

    The ensemble is None below the analyze level.  Deterministic for a
    fixed config: replicate results depend only on the seed tree, not on
    worker scheduling.
    """
    if level not in (LEVEL_FIT, LEVEL_OPTIMIZE, LEVEL_ANALYZE):
        raise ConfigError(f"unknown pipeline level {level!r}")
    warnings: list[str] = []

    with _stage("config"):
        bcfg = config.bootstrap_config()
        if level == LEVEL_ANALYZE:
            # k-independent part of the index rule; the Bonferroni split
            # is re-checked once the data reveals k.
            for p in (config.alpha / 2, 1 - config.alpha / 2,
                      1 - config.alpha):
                quantile_index(config.B, p)

    with _stage("parse"):
        table = load_design_table(config.data_path, config.target,
                                  coding=config.coding_spec())

    with _stage("config"):
        bounds = config.box
        if bounds is not None and len(bounds) == 1 and table.k > 1:
            bounds = bounds * table.k  # one pair applies to every factor
        box = Box(bounds) if bounds is not None else Box.unit(table.k)
        if box.k != table.k:
            raise ConfigError(
                f"box has {box.k} factor(s) but the data has {table.k}")
        if level == LEVEL_ANALYZE:
            warnings.extend(bcfg.validate(table.k))

    with _stage("summarize"):
        cells = tuple(summarize(table))
        warnings.extend(
            f"variance floor applied to the cell at {c.point}"
            for c in cells if c.variance_floored)

    with _stage("fit"):
        mean_surface, _ = fit_ols(table.points, [c.mean for c in cells])
        logvar_surface, _ = fit_ols(table.points,
                                    [c.log_variance for c in cells])

    partial = dict(
        tool=TOOL_NAME, version=TOOL_VERSION, backend=backend_name(backend),
        config=config, cells=cells,
        mean_surface=mean_surface, logvar_surface=logvar_surface,
    )
    if level == LEVEL_FIT:
        return Report(warnings=tuple(warnings), **partial), None

    with _stage("optimize"):
        optimum = minimize_squared_loss(mean_surface, logvar_surface,
                                        config.target, box, backend=backend)
        if optimum.iteration_capped:
            warnings.append("descent iteration cap reached while locating "
                            "the optimum")
        dual = None
        if MODE_DUAL_RESPONSE in config.modes:
            dual = minimize_dual_response(
                mean_surface, logvar_surface, config.target, box,
                variance_scale="log", equality_tol=config.dual_equality_tol)
    partial.update(optimum=optimum, dual_optimum=dual)
    if level == LEVEL_OPTIMIZE:
        return Report(warnings=tuple(warnings), **partial), None

    with _stage("bootstrap"):
        ensemble = run_bootstrap(table, config.target, box, bcfg,
                                 workers=workers, backend=backend)
        warnings.extend(ensemble.warnings)

    with _stage("regions"):
        rectangle = bonferroni_region(ensemble.point_estimate, ensemble,
                                      config.alpha)
        ellipse = (ellipse_region(ensemble, config.alpha)
                   if config.run_inner else None)
        interval = basic_interval(optimum.predicted_mean,
                                  ensemble.mean_responses(), config.alpha)
        bias = bias_report(ensemble, optimum.predicted_mean)

    partial.update(
        ensemble=EnsembleSummary(
            B=bcfg.B, I=bcfg.I, seed=bcfg.seed,
            point_estimate=ensemble.point_estimate,
            outer_covariance=ensemble.outer_covariance,
            biases=ensemble.biases),
        rectangle=rectangle, ellipse=ellipse,
        mean_response_interval=interval, bias=bias,
    )
    return Report(warnings=tuple(warnings), **partial), ensemble


def run_pipeline(config: RunConfig, *, workers: int | None = None,
                 backend=None) -> Report:
    """Full pipeline; returns only the report (see ``execute``)."""
    report, _ = execute(config, LEVEL_ANALYZE, workers=workers,
                        backend=backend)
    return report


def write_replicates_csv(ensemble: BootstrapEnsemble, path) -> None:
    """Machine-readable replicate stream: b, optimum coords, m*, q*."""
    k = ensemble.k
    header = (["b"] + [f"x{i}_star" for i in range(1, k + 1)]
              + ["m_star", "qstar"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rep in ensemble.replicates:
            row = [rep.index]
            row += [repr(v) for v in rep.x_oc_star]
            row.append(repr(rep.mean_at_optimum))
            row.append("" if rep.q_star is None else repr(rep.q_star))
            writer.writerow(row)


# -- JSON mapping ------------------------------------------------------

def _pairs(values) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in values)


def _optimum_to_dict(opt: OptimumResult) -> dict:
    return {
        "mode": opt.mode,
        "x": list(opt.x_oc),
        "objective": opt.objective,
        "predicted_mean": opt.predicted_mean,
        "predicted_variance": opt.predicted_variance,
        "iteration_capped": opt.iteration_capped,
    }


def _optimum_from_dict(payload: dict) -> OptimumResult:
    return OptimumResult(
        x_oc=tuple(float(v) for v in payload["x"]),
        objective=float(payload["objective"]),
        predicted_mean=float(payload["predicted_mean"]),
        predicted_variance=float(payload["predicted_variance"]),
        mode=payload["mode"],
        iteration_capped=bool(payload["iteration_capped"]),
    )


def _interval_to_dict(iv: Interval) -> dict:
    return {"lower": iv.lower, "upper": iv.upper, "level": iv.level,
            "method": iv.method}


def _interval_from_dict(payload: dict) -> Interval:
    return Interval(lower=float(payload["lower"]),
                    upper=float(payload["upper"]),
                    level=float(payload["level"]),
                    method=payload["method"])


def _report_to_dict(report: Report) -> dict:
    cfg = report.config
    out: dict = {
        "tool": report.tool,
        "version": report.version,
        "backend": report.backend,
        "config": {
            "data_path": cfg.data_path,
            "target": cfg.target,
            "box": None if cfg.box is None else [list(b) for b in cfg.box],
            "alpha": cfg.alpha,
            "B": cfg.B,
            "I": cfg.I,
            "seed": cfg.seed,
            "modes": list(cfg.modes),
            "emit": list(cfg.emit),
            "out_dir": cfg.out_dir,
            "run_inner": cfg.run_inner,
            "dual_equality_tol": cfg.dual_equality_tol,
            "coding": (None if cfg.coding is None
                       else [list(c) for c in cfg.coding]),
        },
        "warnings": list(report.warnings),
        "cells": [
            {"point": list(c.point), "mean": c.mean, "variance": c.variance,
             "log_variance": c.log_variance,
             "variance_floored": c.variance_floored}
            for c in report.cells
        ],
        "surfaces": None,
        "optimum": None,
        "dual_optimum": None,
        "ensemble": None,
        "regions": None,
        "mean_response_interval": None,
        "bias": None,
    }
    if report.mean_surface is not None:
        out["surfaces"] = {"mean": report.mean_surface.to_terms(),
                           "log_variance": report.logvar_surface.to_terms()}
    if report.optimum is not None:
        out["optimum"] = _optimum_to_dict(report.optimum)
    if report.dual_optimum is not None:
        out["dual_optimum"] = _optimum_to_dict(report.dual_optimum)
    if report.ensemble is not None:
        ens = report.ensemble
        out["ensemble"] = {
            "B": ens.B, "I": ens.I, "seed": ens.seed,
            "point_estimate": list(ens.point_estimate),
            "outer_covariance": [list(r) for r in ens.outer_covariance],
            "biases": list(ens.biases),
        }
    regions: dict = {}
    if report.rectangle is not None:
        regions["rectangle"] = {
            "joint_level": report.rectangle.joint_level,
            "axes": [_interval_to_dict(iv) for iv in report.rectangle.intervals],
        }
    if report.ellipse is not None:
        ell = report.ellipse
        regions["ellipse"] = {
            "center": list(ell.center),
            "sigma": [list(r) for r in ell.sigma],
            "sigma_inv": [list(r) for r in ell.sigma_inv],
            "radius_sq": ell.radius_sq,
            "level": ell.level,
        }
    if regions:
        out["regions"] = regions
    if report.mean_response_interval is not None:
        out["mean_response_interval"] = _interval_to_dict(
            report.mean_response_interval)
    if report.bias is not None:
        out["bias"] = {
            "coordinates": list(report.bias.coordinate_biases),
            "mean_response": report.bias.mean_response_bias,
        }
    return out


def _report_from_dict(payload: dict) -> Report:
    cfg = payload["config"]
    config = RunConfig(
        data_path=cfg["data_path"],
        target=float(cfg["target"]),
        box=(None if cfg["box"] is None
             else tuple((float(lo), float(hi)) for lo, hi in cfg["box"])),
        alpha=float(cfg["alpha"]),
        B=int(cfg["B"]),
        I=int(cfg["I"]),
        seed=int(cfg["seed"]),
        modes=tuple(cfg["modes"]),
        emit=tuple(cfg["emit"]),
        out_dir=cfg["out_dir"],
        run_inner=bool(cfg["run_inner"]),
        dual_equality_tol=float(cfg["dual_equality_tol"]),
        coding=(None if cfg["coding"] is None
                else tuple((float(c), float(h)) for c, h in cfg["coding"])),
    )
    cells = tuple(
        CellSummary(point=tuple(float(v) for v in c["point"]),
                    mean=float(c["mean"]), variance=float(c["variance"]),
                    log_variance=float(c["log_variance"]),
                    variance_floored=bool(c["variance_floored"]))
        for c in payload["cells"])
    surfaces = payload.get("surfaces")
    mean_surface = logvar_surface = None
    if surfaces is not None:
        mean_surface = QuadraticSurface.from_terms(surfaces["mean"])
        logvar_surface = QuadraticSurface.from_terms(surfaces["log_variance"])
    optimum = (None if payload.get("optimum") is None
               else _optimum_from_dict(payload["optimum"]))
    dual = (None if payload.get("dual_optimum") is None
            else _optimum_from_dict(payload["dual_optimum"]))
    ensemble = None
    if payload.get("ensemble") is not None:
        ens = payload["ensemble"]
        ensemble = EnsembleSummary(
            B=int(ens["B"]), I=int(ens["I"]), seed=int(ens["seed"]),
            point_estimate=tuple(float(v) for v in ens["point_estimate"]),
            outer_covariance=_pairs(ens["outer_covariance"]),
            biases=tuple(float(v) for v in ens["biases"]))
    rectangle = ellipse = None
    regions = payload.get("regions") or {}
    if "rectangle" in regions:
        rect = regions["rectangle"]
        rectangle = RectangularRegion(
            intervals=tuple(_interval_from_dict(iv) for iv in rect["axes"]),
            joint_level=float(rect["joint_level"]))
    if "ellipse" in regions:
        ell = regions["ellipse"]
        ellipse = EllipticalRegion(
            center=tuple(float(v) for v in ell["center"]),
            sigma=_pairs(ell["sigma"]),
            sigma_inv=_pairs(ell["sigma_inv"]),
            radius_sq=float(ell["radius_sq"]),
            level=float(ell["level"]))
    interval = (None if payload.get("mean_response_interval") is None
                else _interval_from_dict(payload["mean_response_interval"]))
    bias = None
    if payload.get("bias") is not None:
        bias = BiasReport(
            coordinate_biases=tuple(float(v)
                                    for v in payload["bias"]["coordinates"]),
            mean_response_bias=float(payload["bias"]["mean_response"]))
    return Report(
        tool=payload["tool"], version=payload["version"],
        backend=payload["backend"], config=config,
        warnings=tuple(payload["warnings"]), cells=cells,
        mean_surface=mean_surface, logvar_surface=logvar_surface,
        optimum=optimum, dual_optimum=dual, ensemble=ensemble,
        rectangle=rectangle, ellipse=ellipse,
        mean_response_interval=interval, bias=bias,
    )
