"""Second-order response surface models fitted by least squares.

A surface in k factors has 1 + 2k + k(k-1)/2 coefficients in the fixed
canonical order (intercept; linear terms; pure quadratics; cross products
x_i*x_j with i < j), so serialized surfaces are comparable across runs.
Fits use Householder QR rather than the normal equations: bootstrap
resampling can hand us nearly collinear responses and the orthogonal
route keeps the solve well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import RankError, SingularFitError, ValidationError

# A column whose post-orthogonalization norm falls below this fraction of
# its original norm is declared linearly dependent.
RANK_RTOL = 1e-10


def n_terms(k: int) -> int:
    return 1 + 2 * k + k * (k - 1) // 2


def term_names(k: int) -> list[str]:
    """Canonical model-term names: b0, x1..xk, x1^2..xk^2, xi*xj (i<j)."""
    names = ["b0"]
    names += [f"x{i}" for i in range(1, k + 1)]
    names += [f"x{i}^2" for i in range(1, k + 1)]
    names += [f"x{i}*x{j}" for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    return names


def monomial_matrix(points: np.ndarray) -> np.ndarray:
    """Rows of canonical-order monomials evaluated at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, k = pts.shape
    cols = [np.ones(m)]
    cols += [pts[:, i] for i in range(k)]
    cols += [pts[:, i] ** 2 for i in range(k)]
    cols += [pts[:, i] * pts[:, j] for i in range(k) for j in range(i + 1, k)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class QuadraticSurface:
    """Fitted second-order polynomial in k factors."""

    k: int
    coefficients: tuple[float, ...]

    def __post_init__(self):
        expected = n_terms(self.k)
        if len(self.coefficients) != expected:
            raise ValidationError(
                f"surface in {self.k} factor(s) needs {expected} "
                f"coefficients, got {len(self.coefficients)}")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValidationError("surface coefficients must be finite")

    def to_terms(self) -> dict:
        """JSON-friendly form: {k, terms: [{name, value}, ...]}."""
        return {
            "k": self.k,
            "terms": [
                {"name": name, "value": value}
                for name, value in zip(term_names(self.k), self.coefficients)
            ],
        }

    @classmethod
    def from_terms(cls, payload: dict) -> "QuadraticSurface":
        k = int(payload["k"])
        names = [t["name"] for t in payload["terms"]]
        if names != term_names(k):
            raise ValidationError(
                f"surface terms are not in canonical order: {names}")
        return cls(k, tuple(float(t["value"]) for t in payload["terms"]))


@dataclass(frozen=True)
class FitDiagnostics:
    residuals: tuple[float, ...]
    residual_sum_of_squares: float
    condition_estimate: float


def build_design_matrix(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Second-order model matrix; one row per design point.

    Raises RankError when there are fewer points than model terms, since
    no full-rank fit is possible in that case.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, k = pts.shape
    if m < n_terms(k):
        raise RankError(
            f"{m} design point(s) cannot identify {n_terms(k)} model terms")
    return monomial_matrix(pts)


def ols_projector(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Matrix P with coefficients = P @ responses, from the QR of X.

    The bootstrap engine refits thousands of response vectors on one fixed
    set of design points; a precomputed projector turns each refit into a
    single matrix-vector product.
    """
    X = build_design_matrix(points)
    Q, R = _checked_qr(X, np.atleast_2d(np.asarray(points, dtype=float)).shape[1])
    return np.linalg.solve(R, Q.T)


def _checked_qr(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    Q, R = np.linalg.qr(X)
    col_norms = np.linalg.norm(X, axis=0)
    names = term_names(k)
    for j in range(X.shape[1]):
        if abs(R[j, j]) < RANK_RTOL * col_norms[j]:
            raise SingularFitError(names[j])
    return Q, R


def fit_ols(
    points: Sequence[Sequence[float]],
    responses: Iterable[float],
) -> tuple[QuadraticSurface, FitDiagnostics]:
    """Least-squares fit of a second-order surface.

    Args:
        points: design points, one k-vector each.
        responses: one response value per design point.

    Returns:
        The fitted surface and its diagnostics (residuals, RSS, condition
        number of the design matrix).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(list(responses), dtype=float)
    if y.shape[0] != pts.shape[0]:
        raise ValidationError(
            f"{pts.shape[0]} design points but {y.shape[0]} responses")
    k = pts.shape[1]
    X = build_design_matrix(pts)
    Q, R = _checked_qr(X, k)
    coefs = np.linalg.solve(R, Q.T @ y)
    residuals = y - X @ coefs
    rss = float(residuals @ residuals)
    cond = float(np.linalg.cond(X))
    surface = QuadraticSurface(k, tuple(float(c) for c in coefs))
    return surface, FitDiagnostics(tuple(float(r) for r in residuals), rss, cond)


def _check_dim(surface: QuadraticSurface, x) -> np.ndarray:
    vec = np.asarray(x, dtype=float)
    if vec.shape != (surface.k,):
        raise ValidationError(
            f"point has shape {vec.shape}, surface expects ({surface.k},)")
    return vec


def evaluate(surface: QuadraticSurface, x: Sequence[float]) -> float:
    """Polynomial value at x."""
    vec = _check_dim(surface, x)
    row = monomial_matrix(vec[None, :])[0]
    return float(row @ np.asarray(surface.coefficients))


def evaluate_many(surface: QuadraticSurface, points: np.ndarray) -> np.ndarray:
    """Polynomial values at each row of ``points``."""
    return monomial_matrix(points) @ np.asarray(surface.coefficients)


def gradient(surface: QuadraticSurface, x: Sequence[float]) -> np.ndarray:
    """Exact analytic gradient of the polynomial at x."""
    vec = _check_dim(surface, x)
    k = surface.k
    c = np.asarray(surface.coefficients)
    g = c[1 : 1 + k] + 2.0 * c[1 + k : 1 + 2 * k] * vec
    idx = 1 + 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            g[i] += c[idx] * vec[j]
            g[j] += c[idx] * vec[i]
            idx += 1
    return g


def hessian(surface: QuadraticSurface) -> np.ndarray:
    """Hessian of the polynomial (constant for a quadratic)."""
    k = surface.k
    c = np.asarray(surface.coefficients)
    H = np.diag(2.0 * c[1 + k : 1 + 2 * k])
    idx = 1 + 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            H[i, j] = H[j, i] = c[idx]
            idx += 1
    return H
