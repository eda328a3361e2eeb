"""Replicated designed-experiment data: parsing, validation, summaries.

The experiment is a set of design points in coded units, each observed
``n >= 2`` times.  Cell summaries carry the sample mean, the sample
variance (n-1 divisor), and the log variance that feeds the variance
surface fit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Union

import numpy as np

from .errors import ParseError, ValidationError

# Sample variances below this are clamped before the log transform.
# Resampling a cell can return the same observation n times, and log(0)
# would poison the variance surface fit.
VARIANCE_FLOOR = 1e-8

DEFAULT_LEVEL_BOX = (-1.0, 1.0)


@dataclass(frozen=True)
class DesignCell:
    """One design point and its replicate observations."""

    point: tuple[float, ...]
    replicates: tuple[float, ...]

    def __post_init__(self):
        if not self.replicates:
            raise ValidationError("cell has no replicate observations")
        if not all(math.isfinite(v) for v in self.point):
            raise ValidationError(f"design point {self.point} is not finite")
        if not all(math.isfinite(v) for v in self.replicates):
            raise ValidationError(
                f"cell at {self.point} has a non-finite replicate")

    @property
    def n(self) -> int:
        return len(self.replicates)


@dataclass(frozen=True)
class DesignTable:
    """Validated collection of design cells plus the target value."""

    cells: tuple[DesignCell, ...]
    k: int
    target: float
    level_box: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("factor count must be at least 1")
        if not self.cells:
            raise ValidationError("design table has no cells")
        box = self.level_box or tuple(DEFAULT_LEVEL_BOX for _ in range(self.k))
        if len(box) != self.k:
            raise ValidationError("level box dimension does not match k")
        object.__setattr__(self, "level_box", box)
        seen: set[tuple[float, ...]] = set()
        for cell in self.cells:
            if len(cell.point) != self.k:
                raise ValidationError(
                    f"design point {cell.point} has dimension "
                    f"{len(cell.point)}, expected {self.k}")
            if cell.n < 2:
                raise ValidationError(
                    f"design point {cell.point} has {cell.n} replicate(s); "
                    f"sample variance needs at least 2")
            for coord, (lo, hi) in zip(cell.point, box):
                if not lo <= coord <= hi:
                    raise ValidationError(
                        f"coded level {coord} at point {cell.point} lies "
                        f"outside the declared box [{lo}, {hi}]")
            if cell.point in seen:
                raise ValidationError(f"duplicate design point {cell.point}")
            seen.add(cell.point)

    @property
    def points(self) -> tuple[tuple[float, ...], ...]:
        return tuple(cell.point for cell in self.cells)

    def padded_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Replicates as a zero-padded (cells, max_n) array plus counts."""
        counts = np.array([cell.n for cell in self.cells], dtype=np.int64)
        values = np.zeros((len(self.cells), int(counts.max())))
        for i, cell in enumerate(self.cells):
            values[i, : cell.n] = cell.replicates
        return values, counts


@dataclass(frozen=True)
class CellSummary:
    """Sample moments of one cell."""

    point: tuple[float, ...]
    mean: float
    variance: float
    log_variance: float
    variance_floored: bool = False


@dataclass(frozen=True)
class CodingSpec:
    """Affine map from natural factor units to coded units."""

    centers: tuple[float, ...]
    half_ranges: tuple[float, ...]

    def __post_init__(self):
        if len(self.centers) != len(self.half_ranges):
            raise ValidationError("coding centers and half-ranges differ in length")
        if any(h <= 0 for h in self.half_ranges):
            raise ValidationError("coding half-ranges must be strictly positive")


def code_variables(natural_point: Iterable[float], spec: CodingSpec) -> tuple[float, ...]:
    """Convert a point in natural units to coded units.

    coded_j = (natural_j - center_j) / half_range_j
    """
    point = tuple(float(v) for v in natural_point)
    if len(point) != len(spec.centers):
        raise ValidationError(
            f"point has dimension {len(point)}, coding spec has "
            f"{len(spec.centers)}")
    return tuple((v - c) / h
                 for v, c, h in zip(point, spec.centers, spec.half_ranges))


def parse_design_table(
    source: Union[bytes, BinaryIO],
    target: float,
    *,
    coding: CodingSpec | None = None,
    level_box: tuple[tuple[float, float], ...] = (),
) -> DesignTable:
    """Parse the replicate-per-row CSV layout into a DesignTable.

    Expected header: ``x1,...,xk,y``.  Each row is one replicate
    observation; consecutive rows sharing the same factor levels form one
    cell.  A design point reappearing after other points is a duplicate
    and rejected.  ``coding``, when given, converts the parsed factor
    levels from natural to coded units.
    """
    raw = source if isinstance(source, bytes) else source.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"input is not valid UTF-8: {exc}") from exc

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("input is empty, expected a header row") from None
    header = [h.strip() for h in header]
    if len(header) < 2 or header[-1] != "y":
        raise ParseError(f"header must be x1,...,xk,y, got {header}")
    k = len(header) - 1
    expected = [f"x{j}" for j in range(1, k + 1)]
    if header[:-1] != expected:
        raise ParseError(f"header must be {expected + ['y']}, got {header}")

    cells: list[tuple[tuple[float, ...], list[float]]] = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != k + 1:
            raise ParseError(f"row {row_no}: expected {k + 1} fields, got {len(row)}")
        parsed = []
        for col_name, field in zip(header, row):
            try:
                parsed.append(float(field))
            except ValueError:
                raise ParseError(
                    f"row {row_no}, column {col_name!r}: "
                    f"cannot parse {field.strip()!r} as a number") from None
        point = tuple(parsed[:-1])
        if coding is not None:
            point = code_variables(point, coding)
        if cells and cells[-1][0] == point:
            cells[-1][1].append(parsed[-1])
        else:
            cells.append((point, [parsed[-1]]))

    return DesignTable(
        cells=tuple(DesignCell(point, tuple(reps)) for point, reps in cells),
        k=k,
        target=float(target),
        level_box=level_box,
    )


def load_design_table(path, target: float, **kwargs) -> DesignTable:
    """Read a design table from a CSV file path."""
    with open(path, "rb") as fh:
        return parse_design_table(fh, target, **kwargs)


def summarize_cell(replicates: Iterable[float]) -> tuple[float, float, float, bool]:
    """(mean, variance, log variance, floored) of one replicate vector."""
    y = np.asarray(list(replicates), dtype=float)
    mean = float(y.sum() / y.size)
    variance = float(((y - mean) ** 2).sum() / (y.size - 1))
    floored = variance < VARIANCE_FLOOR
    log_variance = math.log(max(variance, VARIANCE_FLOOR))
    return mean, variance, log_variance, floored


def summarize(table: DesignTable) -> list[CellSummary]:
    """Per-cell sample mean, variance (n-1 divisor), and log variance."""
    out = []
    for cell in table.cells:
        mean, variance, log_variance, floored = summarize_cell(cell.replicates)
        out.append(CellSummary(cell.point, mean, variance, log_variance, floored))
    return out
