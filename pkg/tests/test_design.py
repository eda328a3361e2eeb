"""Design-table parsing, validation, and cell summaries."""

import math

import numpy as np
import pytest

import rsboot as rb
from rsboot.design import VARIANCE_FLOOR, summarize_cell
from rsboot.errors import ParseError, ValidationError

# Printed case-study summary columns (3-decimal rounding).
EXPECTED_SUMMARIES = {
    (-1.0, -1.0): (75.949, 4.263),
    (0.0, -1.0): (64.209, 6.853),
    (1.0, -1.0): (91.247, 6.390),
    (-1.0, 0.0): (63.895, 3.922),
    (0.0, 0.0): (51.900, 1.775),
    (1.0, 0.0): (79.952, 6.181),
    (-1.0, 1.0): (92.793, 11.631),
    (0.0, 1.0): (78.992, 2.377),
    (1.0, 1.0): (107.938, 4.495),
}


class TestParsing:
    def test_case_study_table(self, table1):
        assert table1.k == 2
        assert len(table1.cells) == 9
        assert table1.target == 50.0
        assert all(cell.n == 10 for cell in table1.cells)
        assert table1.points[0] == (-1.0, -1.0)
        assert table1.cells[0].replicates[0] == 73.94

    def test_minimal_two_replicates(self):
        stream = b"x1,x2,y\n0,0,1.0\n0,0,1.0\n"
        table = rb.parse_design_table(stream, 5.0)
        assert table.k == 2
        assert len(table.cells) == 1
        assert table.cells[0].n == 2

    def test_duplicate_design_point_rejected(self):
        stream = (b"x1,x2,y\n-1,-1,1\n-1,-1,2\n"
                  b"0,0,1\n0,0,2\n"
                  b"-1,-1,3\n-1,-1,4\n")
        with pytest.raises(ValidationError, match="duplicate design point"):
            rb.parse_design_table(stream, 0.0)

    def test_malformed_number_names_row_and_column(self):
        stream = b"x1,x2,y\n0,0,1.0\n0,oops,2.0\n"
        with pytest.raises(ParseError, match=r"row 3, column 'x2'"):
            rb.parse_design_table(stream, 0.0)

    def test_single_replicate_cell_rejected(self):
        stream = b"x1,x2,y\n0,0,1.0\n1,1,2.0\n1,1,3.0\n"
        with pytest.raises(ValidationError, match="at least 2"):
            rb.parse_design_table(stream, 0.0)

    def test_header_must_be_canonical(self):
        with pytest.raises(ParseError, match="header"):
            rb.parse_design_table(b"a,b,y\n0,0,1\n0,0,1\n", 0.0)
        with pytest.raises(ParseError, match="header"):
            rb.parse_design_table(b"x1,x2,z\n0,0,1\n0,0,1\n", 0.0)

    def test_non_utf8_stream_rejected(self):
        with pytest.raises(ParseError, match="UTF-8"):
            rb.parse_design_table(b"x1,x2,y\n\xff\xfe,0,1\n", 0.0)

    def test_levels_must_lie_in_declared_box(self):
        stream = b"x1,x2,y\n2,0,1.0\n2,0,2.0\n"
        with pytest.raises(ValidationError, match="outside the declared box"):
            rb.parse_design_table(stream, 0.0)

    def test_row_order_and_replicate_order_preserved(self, table1):
        cell = table1.cells[4]
        assert cell.point == (0.0, 0.0)
        assert cell.replicates[:3] == (51.23, 51.03, 53.16)


class TestCoding:
    SPEC = rb.CodingSpec(centers=(250.0, 30.0), half_ranges=(50.0, 10.0))

    def test_center_maps_to_origin(self):
        assert rb.code_variables((250.0, 30.0), self.SPEC) == (0.0, 0.0)

    def test_edges_map_to_unit(self):
        assert rb.code_variables((300.0, 20.0), self.SPEC) == (1.0, -1.0)

    def test_interior_point(self):
        # (275-250)/50 = 0.5 and (35-30)/10 = 0.5 by hand
        assert rb.code_variables((275.0, 35.0), self.SPEC) == (0.5, 0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            rb.code_variables((1.0,), self.SPEC)

    def test_half_range_positive(self):
        with pytest.raises(ValidationError):
            rb.CodingSpec(centers=(0.0,), half_ranges=(0.0,))

    def test_parse_applies_coding(self):
        stream = b"x1,y\n300,1.0\n300,2.0\n"
        spec = rb.CodingSpec(centers=(250.0,), half_ranges=(50.0,))
        table = rb.parse_design_table(stream, 0.0, coding=spec)
        assert table.points == ((1.0,),)


class TestSummaries:
    def test_case_study_columns_reproduced(self, table1_cells):
        assert len(table1_cells) == 9
        for cell in table1_cells:
            mean, variance = EXPECTED_SUMMARIES[cell.point]
            assert cell.mean == pytest.approx(mean, abs=1e-3)
            assert cell.variance == pytest.approx(variance, abs=1e-3)
            assert cell.log_variance == pytest.approx(math.log(cell.variance))
            assert not cell.variance_floored

    def test_zero_spread_cell_hits_floor(self):
        mean, variance, log_variance, floored = summarize_cell([3.5, 3.5, 3.5])
        assert mean == 3.5
        assert variance == 0.0
        assert floored
        assert log_variance == math.log(VARIANCE_FLOOR)

    def test_mean_bounded_by_replicates(self, table1_cells, table1):
        for cell, summary in zip(table1.cells, table1_cells):
            assert min(cell.replicates) <= summary.mean <= max(cell.replicates)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        values = rng.normal(10.0, 2.0, size=12)
        base = summarize_cell(values)
        for _ in range(10):
            shuffled = rng.permutation(values)
            other = summarize_cell(shuffled)
            assert other[0] == pytest.approx(base[0], rel=1e-12)
            assert other[1] == pytest.approx(base[1], rel=1e-12)

    def test_constant_shift_moves_mean_only(self):
        rng = np.random.default_rng(4)
        values = rng.normal(0.0, 1.0, size=10)
        base_mean, base_var, _, _ = summarize_cell(values)
        for shift in (-7.25, 3.0, 123.456):
            mean, variance, _, _ = summarize_cell(values + shift)
            assert mean == pytest.approx(base_mean + shift, rel=1e-9, abs=1e-9)
            assert variance == pytest.approx(base_var, rel=1e-9)

    def test_variance_divisor_is_n_minus_one(self):
        # two points: variance is half the squared gap times 2/(n-1) = gap^2/2
        _, variance, _, _ = summarize_cell([0.0, 2.0])
        assert variance == pytest.approx(2.0)


class TestTableInvariants:
    def test_padded_values_round_trip(self, table1):
        values, counts = table1.padded_values()
        assert values.shape == (9, 10)
        assert counts.tolist() == [10] * 9
        assert values[4, 0] == 51.23

    def test_point_dimension_checked(self):
        with pytest.raises(ValidationError):
            rb.DesignTable(
                cells=(rb.DesignCell((0.0, 0.0), (1.0, 2.0)),
                       rb.DesignCell((1.0,), (1.0, 2.0))),
                k=2, target=0.0)

    def test_empty_table_rejected(self):
        with pytest.raises(ValidationError):
            rb.DesignTable(cells=(), k=2, target=0.0)
