"""Squared-loss and dual-response optimization over the box."""

import math

import numpy as np
import pytest

import rsboot as rb
from rsboot.errors import (InfeasibleError, PathologicalSurfaceError,
                           ValidationError)
from rsboot.optimize import grid_objective_values

FLAT = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def surface(*coefs):
    return rb.QuadraticSurface(2, tuple(coefs))


class TestBox:
    def test_bounds_must_be_ordered(self):
        with pytest.raises(ValidationError):
            rb.Box(((1.0, -1.0),))

    def test_contains_and_clip(self):
        box = rb.Box.unit(2)
        assert box.contains((1.0, -1.0))
        assert not box.contains((1.0001, 0.0))
        assert box.clip((2.0, -3.0)).tolist() == [1.0, -1.0]


class TestObjective:
    def test_zero_bias_unit_variance(self):
        mean = surface(50.0, 0, 0, 0, 0, 0)
        logvar = surface(*FLAT)
        for x in [(0.0, 0.0), (0.7, -0.3), (1.0, 1.0)]:
            assert rb.squared_loss_objective(mean, logvar, 50.0, x) == 1.0

    def test_printed_surfaces_at_origin(self):
        mean = surface(51.741, 7.750, 8.053, 20.262, 19.939, -0.038)
        logvar = surface(0.841, -0.015, -0.068, 0.620, 0.421, -0.339)
        expected = (51.741 - 50.0) ** 2 + math.exp(0.841)
        got = rb.squared_loss_objective(mean, logvar, 50.0, (0.0, 0.0))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_exp_overflow_is_flagged(self):
        mean = surface(50.0, 0, 0, 0, 0, 0)
        logvar = surface(800.0, 0, 0, 0, 0, 0)
        with pytest.raises(PathologicalSurfaceError):
            rb.squared_loss_objective(mean, logvar, 50.0, (0.0, 0.0))


class TestMinimizeSquaredLoss:
    def test_case_study_optimum(self, table1_surfaces, unit_box):
        mean_surface, logvar_surface = table1_surfaces
        result = rb.minimize_squared_loss(mean_surface, logvar_surface,
                                          50.0, unit_box)
        assert result.x_oc[0] == pytest.approx(-0.168, abs=2e-3)
        assert result.x_oc[1] == pytest.approx(-0.179, abs=2e-3)
        assert result.mode == "squared_loss"
        expected_obj = ((result.predicted_mean - 50.0) ** 2
                        + result.predicted_variance)
        assert result.objective == pytest.approx(expected_obj, rel=1e-9)

    def test_beats_dense_grid_oracle(self, table1_surfaces, unit_box):
        mean_surface, logvar_surface = table1_surfaces
        result = rb.minimize_squared_loss(mean_surface, logvar_surface,
                                          50.0, unit_box)
        oracle = grid_objective_values(mean_surface, logvar_surface, 50.0,
                                       unit_box, 401)
        assert result.objective <= oracle.min() + 1e-9

    def test_separable_minimum_and_tie_break(self, unit_box):
        # objective x1^2 + 1 is flat in x2; the tie rule picks the
        # lexicographically smallest coordinate vector
        mean = surface(50.0, 1.0, 0, 0, 0, 0)
        logvar = surface(*FLAT)
        result = rb.minimize_squared_loss(mean, logvar, 50.0, unit_box)
        assert result.x_oc[0] == pytest.approx(0.0, abs=1e-6)
        assert result.x_oc[1] == -1.0

    def test_boundary_landing_against_grid(self, unit_box):
        # mean = 50 + (x1 - 2)^2 has its zero-bias point outside the box
        mean = surface(54.0, -4.0, 0.0, 1.0, 0.0, 0.0)
        logvar = surface(*FLAT)
        result = rb.minimize_squared_loss(mean, logvar, 50.0, unit_box)
        assert result.x_oc[0] == 1.0
        assert result.x_oc[1] == -1.0
        oracle = grid_objective_values(mean, logvar, 50.0, unit_box, 401)
        assert result.objective <= oracle.min() + 1e-9
        assert rb.Box.unit(2).contains(result.x_oc)

    def test_pathological_surface_raises(self, unit_box):
        mean = surface(50.0, 0, 0, 0, 0, 0)
        logvar = surface(800.0, 0, 0, 0, 0, 0)
        with pytest.raises(PathologicalSurfaceError):
            rb.minimize_squared_loss(mean, logvar, 50.0, unit_box)

    def test_target_shift_equivariance(self, table1, table1_cells, unit_box):
        base_mean, _ = rb.fit_ols(table1.points,
                                  [c.mean for c in table1_cells])
        logvar, _ = rb.fit_ols(table1.points,
                               [c.log_variance for c in table1_cells])
        base = rb.minimize_squared_loss(base_mean, logvar, 50.0, unit_box)
        for shift in (-3.0, 12.5):
            shifted_mean, _ = rb.fit_ols(
                table1.points, [c.mean + shift for c in table1_cells])
            moved = rb.minimize_squared_loss(shifted_mean, logvar,
                                             50.0 + shift, unit_box)
            for a, b in zip(moved.x_oc, base.x_oc):
                assert a == pytest.approx(b, abs=1e-6)

    def test_result_stays_in_box_exactly(self, table1_surfaces):
        mean_surface, logvar_surface = table1_surfaces
        box = rb.Box(((-0.05, 0.05), (-0.05, 0.05)))
        result = rb.minimize_squared_loss(mean_surface, logvar_surface,
                                          50.0, box)
        assert box.contains(result.x_oc)

    def test_dimension_checks(self, table1_surfaces):
        mean_surface, logvar_surface = table1_surfaces
        with pytest.raises(ValidationError):
            rb.minimize_squared_loss(mean_surface, logvar_surface, 50.0,
                                     rb.Box.unit(3))


class TestDualResponse:
    def test_pinned_target_with_monotone_variance(self, unit_box):
        mean = surface(50.0, 1.0, 0, 0, 0, 0)
        variance = surface(2.0, 0.0, 1.0, 0, 0, 0)
        result = rb.minimize_dual_response(mean, variance, 50.0, unit_box,
                                           variance_scale="direct")
        # any |x1| <= tol ties at variance 1; the lexicographic rule
        # settles at the numerical edge of the band
        assert abs(result.x_oc[0]) <= 1e-3 + 1e-9
        assert result.x_oc[1] == -1.0
        assert result.predicted_variance == pytest.approx(1.0, abs=1e-9)
        assert result.mode == "dual_response"

    def test_constant_bias_is_infeasible(self, unit_box):
        mean = surface(60.0, 0, 0, 0, 0, 0)
        variance = surface(2.0, 0.0, 1.0, 0, 0, 0)
        with pytest.raises(InfeasibleError):
            rb.minimize_dual_response(mean, variance, 50.0, unit_box,
                                      variance_scale="direct")

    def test_case_study_infeasible_at_default_tolerance(
            self, table1_surfaces, unit_box):
        # the fitted mean surface never reaches 50 inside the box (its
        # minimum is ~50.185), so the default 1e-3 band is empty
        mean_surface, logvar_surface = table1_surfaces
        with pytest.raises(InfeasibleError, match="widen the box"):
            rb.minimize_dual_response(mean_surface, logvar_surface, 50.0,
                                      unit_box)

    def test_case_study_with_widened_band(self, table1_surfaces, unit_box,
                                          table1_optimum):
        mean_surface, logvar_surface = table1_surfaces
        dual = rb.minimize_dual_response(mean_surface, logvar_surface, 50.0,
                                         unit_box, equality_tol=0.25)
        assert abs(dual.predicted_mean - 50.0) <= 0.25 + 1e-6
        # squared-loss dominance: the global squared-loss optimum cannot
        # do worse than the dual solution under the same metric
        assert table1_optimum.objective <= dual.objective

    def test_dual_solution_variance_verified_on_constrained_grid(
            self, table1_surfaces, unit_box):
        mean_surface, logvar_surface = table1_surfaces
        tol = 0.25
        dual = rb.minimize_dual_response(mean_surface, logvar_surface, 50.0,
                                         unit_box, equality_tol=tol)
        axes = [np.linspace(-1, 1, 401)] * 2
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        from rsboot.surfaces import evaluate_many
        means = evaluate_many(mean_surface, pts)
        variances = np.exp(evaluate_many(logvar_surface, pts))
        feasible = np.abs(means - 50.0) <= tol
        assert feasible.any()
        assert dual.predicted_variance <= variances[feasible].min() + 1e-6

    def test_negative_direct_variance_is_pathological(self, unit_box):
        mean = surface(50.0, 1.0, 0, 0, 0, 0)
        variance = surface(-2.0, 0.0, 1.0, 0, 0, 0)
        with pytest.raises(PathologicalSurfaceError):
            rb.minimize_dual_response(mean, variance, 50.0, unit_box,
                                      variance_scale="direct")

    def test_bad_scale_rejected(self, table1_surfaces, unit_box):
        mean_surface, logvar_surface = table1_surfaces
        with pytest.raises(ValidationError):
            rb.minimize_dual_response(mean_surface, logvar_surface, 50.0,
                                      unit_box, variance_scale="sqrt")
