"""Dual response-surface optimization with bootstrap confidence regions.

Fits second-order surfaces for the process mean and log variance of a
replicated designed experiment, locates the squared-loss optimum over a
factor box, and quantifies its uncertainty with a double bootstrap:
per-axis basic intervals, a Bonferroni joint rectangle, a studentized
elliptical region, and an interval for the mean response at the optimum.
"""

__version__ = "0.1.0"

from ._kernel import available_backends, backend_name, get_backend
from .bootstrap import (BootstrapConfig, BootstrapEnsemble,
                        BootstrapReplicate, double_bootstrap_covariance,
                        q_statistic, quantile_index, resample_table,
                        run_bootstrap)
from .design import (CellSummary, CodingSpec, DesignCell, DesignTable,
                     code_variables, load_design_table, parse_design_table,
                     summarize)
from .errors import (BootstrapError, ConfigError, InfeasibleError,
                     ParseError, PathologicalSurfaceError, RankError,
                     RsbootError, SingularCovarianceError, SingularFitError,
                     UnsupportedPlotError, ValidationError)
from .optimize import (Box, OptimumResult, minimize_dual_response,
                       minimize_squared_loss, squared_loss_objective)
from .regions import (BiasReport, EllipticalRegion, Interval,
                      RectangularRegion, basic_interval, bias_report,
                      bonferroni_region, ellipse_region, region_membership)
from .report import (Report, RunConfig, execute, run_pipeline,
                     write_replicates_csv)
from .surfaces import (FitDiagnostics, QuadraticSurface, build_design_matrix,
                       evaluate, fit_ols, gradient, term_names)

__all__ = [
    "__version__",
    "available_backends", "backend_name", "get_backend",
    "BootstrapConfig", "BootstrapEnsemble", "BootstrapReplicate",
    "double_bootstrap_covariance", "q_statistic", "quantile_index",
    "resample_table", "run_bootstrap",
    "CellSummary", "CodingSpec", "DesignCell", "DesignTable",
    "code_variables", "load_design_table", "parse_design_table", "summarize",
    "BootstrapError", "ConfigError", "InfeasibleError", "ParseError",
    "PathologicalSurfaceError", "RankError", "RsbootError",
    "SingularCovarianceError", "SingularFitError", "UnsupportedPlotError",
    "ValidationError",
    "Box", "OptimumResult", "minimize_dual_response",
    "minimize_squared_loss", "squared_loss_objective",
    "BiasReport", "EllipticalRegion", "Interval", "RectangularRegion",
    "basic_interval", "bias_report", "bonferroni_region", "ellipse_region",
    "region_membership",
    "Report", "RunConfig", "execute", "run_pipeline", "write_replicates_csv",
    "FitDiagnostics", "QuadraticSurface", "build_design_matrix", "evaluate",
    "fit_ols", "gradient", "term_names",
]
