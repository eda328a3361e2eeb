"""Acceptance gate: every criterion at its stated tolerance.

Each check prints one PASS/FAIL line (run pytest with -s or check the
captured output).  Criteria touching the published case-study values are
asserted exactly as stated even where our independently derived numbers
show the published value is not reproducible; see the test docstrings.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import rsboot as rb
from rsboot.optimize import grid_objective_values
from rsboot.report import RunConfig, execute

from conftest import ALPHA, FULL_SEED, TABLE1, TARGET

EXTRA_SEEDS = (7, 42, 1234, 777)

PRINTED_MEAN_COEFS = (51.741, 7.750, 8.053, 20.262, 19.939, -0.038)
PRINTED_LOGVAR_COEFS = (0.841, -0.015, -0.068, 0.620, 0.421, -0.339)
PRINTED_SUMMARIES = {
    (-1.0, -1.0): (75.949, 4.263), (0.0, -1.0): (64.209, 6.853),
    (1.0, -1.0): (91.247, 6.390), (-1.0, 0.0): (63.895, 3.922),
    (0.0, 0.0): (51.900, 1.775), (1.0, 0.0): (79.952, 6.181),
    (-1.0, 1.0): (92.793, 11.631), (0.0, 1.0): (78.992, 2.377),
    (1.0, 1.0): (107.938, 4.495),
}


@contextmanager
def criterion(label: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {label}: FAIL "
              f"({time.perf_counter() - start:.1f}s)")
        raise
    print(f"ACCEPTANCE {label}: PASS ({time.perf_counter() - start:.1f}s)")


def test_c1_summary_reproduction():
    with criterion("C1 cell summary reproduction"):
        start = time.perf_counter()
        table = rb.load_design_table(TABLE1, TARGET)
        cells = rb.summarize(table)
        assert len(cells) == 9
        for cell in cells:
            mean, variance = PRINTED_SUMMARIES[cell.point]
            assert cell.mean == pytest.approx(mean, abs=1e-3)
            assert cell.variance == pytest.approx(variance, abs=1e-3)
        assert time.perf_counter() - start < 1.0


def test_c2_coefficient_reproduction(table1, table1_cells):
    with criterion("C2 surface coefficient reproduction"):
        start = time.perf_counter()
        mean_surface, _ = rb.fit_ols(table1.points,
                                     [c.mean for c in table1_cells])
        logvar_surface, _ = rb.fit_ols(table1.points,
                                       [c.log_variance for c in table1_cells])
        for got, expected in zip(mean_surface.coefficients,
                                 PRINTED_MEAN_COEFS):
            assert got == pytest.approx(expected, abs=1e-3)
        for got, expected in zip(logvar_surface.coefficients,
                                 PRINTED_LOGVAR_COEFS):
            assert got == pytest.approx(expected, abs=1e-3)
        assert time.perf_counter() - start < 1.0


def test_c3_optimum_location(table1_surfaces, unit_box):
    with criterion("C3 optimum location"):
        start = time.perf_counter()
        mean_surface, logvar_surface = table1_surfaces
        result = rb.minimize_squared_loss(mean_surface, logvar_surface,
                                          TARGET, unit_box)
        assert result.x_oc[0] == pytest.approx(-0.168, abs=2e-3)
        assert result.x_oc[1] == pytest.approx(-0.179, abs=2e-3)
        oracle = grid_objective_values(mean_surface, logvar_surface, TARGET,
                                       unit_box, 401)
        assert result.objective <= oracle.min() + 1e-9
        assert time.perf_counter() - start < 5.0


def test_c3_predicted_mean_at_optimum(table1_optimum):
    """Published value 50.30 +- 0.02.

    Our independently verified evaluation of the fitted mean surface at
    the fitted optimum gives 50.207 (hand substitution of the published
    coefficients at the published optimum gives the same number), so this
    check documents an unreproducible published value; it is asserted as
    stated rather than weakened.
    """
    with criterion("C3 predicted mean at optimum (published value)"):
        assert table1_optimum.predicted_mean == pytest.approx(50.30,
                                                              abs=0.02)


@pytest.fixture(scope="module")
def five_seed_runs(table1, unit_box, full_ensemble, table1_optimum):
    runs = []
    for seed in (FULL_SEED,) + EXTRA_SEEDS:
        if seed == FULL_SEED:
            ensemble, elapsed = full_ensemble, None
        else:
            start = time.perf_counter()
            config = rb.BootstrapConfig(B=999, I=100, seed=seed, alpha=ALPHA,
                                        run_inner=True)
            ensemble = rb.run_bootstrap(table1, TARGET, unit_box, config)
            elapsed = time.perf_counter() - start
        interval = rb.basic_interval(table1_optimum.predicted_mean,
                                     ensemble.mean_responses(), ALPHA)
        bias = rb.bias_report(ensemble, table1_optimum.predicted_mean)
        runs.append((seed, elapsed, interval, bias))
        print(f"  seed {seed}: interval ({interval.lower:.3f}, "
              f"{interval.upper:.3f}), coordinate biases "
              f"({bias.coordinate_biases[0]:+.5f}, "
              f"{bias.coordinate_biases[1]:+.5f}), "
              f"mean-response bias {bias.mean_response_bias:+.4f}")
    return runs


def test_c4_runtime_per_seed(five_seed_runs):
    with criterion("C4 bootstrap runtime per seed"):
        for seed, elapsed, _, _ in five_seed_runs:
            if elapsed is not None:
                assert elapsed < 300.0, f"seed {seed} took {elapsed:.0f}s"


def test_c4a_mean_response_interval(five_seed_runs):
    """Published 90% interval (49.36, 50.59), endpoints +-0.15.

    Our runs give roughly (49.57, 50.39) across seeds.  The published
    interval is anchored to the published point estimate 50.30, which the
    published surfaces do not reproduce (see C3); asserted as stated.
    """
    with criterion("C4a mean-response interval endpoints (published value)"):
        for seed, _, interval, _ in five_seed_runs:
            assert interval.lower == pytest.approx(49.36, abs=0.15), \
                f"seed {seed}"
            assert interval.upper == pytest.approx(50.59, abs=0.15), \
                f"seed {seed}"


def test_c4b_coordinate_bias_magnitudes(five_seed_runs):
    with criterion("C4b coordinate bias magnitudes"):
        for seed, _, _, bias in five_seed_runs:
            for value in bias.coordinate_biases:
                assert abs(value) < 0.02, f"seed {seed}: {value}"


def test_c4c_mean_response_bias(five_seed_runs):
    with criterion("C4c mean-response bias"):
        for seed, _, _, bias in five_seed_runs:
            assert bias.mean_response_bias == pytest.approx(0.17, abs=0.10), \
                f"seed {seed}: {bias.mean_response_bias}"


def test_c5_property_suite(table1, table1_cells, table1_surfaces, unit_box,
                           monkeypatch, tmp_path):
    with criterion("C5 property suite"):
        start = time.perf_counter()
        bootstrap_seconds = 0.0

        # OLS residual orthogonality at 1e-8 relative
        X = rb.build_design_matrix(table1.points)
        _, diag = rb.fit_ols(table1.points, [c.mean for c in table1_cells])
        residuals = np.asarray(diag.residuals)
        for j in range(X.shape[1]):
            bound = 1e-8 * np.linalg.norm(X[:, j]) * np.linalg.norm(residuals)
            assert abs(X[:, j] @ residuals) <= bound

        # analytic gradient vs central differences at 20 random points
        mean_surface, logvar_surface = table1_surfaces
        rng = np.random.default_rng(0)
        h = 1e-5
        for _ in range(20):
            x = rng.uniform(-1.0, 1.0, size=2)
            g = rb.gradient(mean_surface, x)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (rb.evaluate(mean_surface, x + e)
                      - rb.evaluate(mean_surface, x - e)) / (2 * h)
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-6)

        # target-shift equivariance of the optimum
        base = rb.minimize_squared_loss(mean_surface, logvar_surface,
                                        TARGET, unit_box)
        shifted_mean, _ = rb.fit_ols(table1.points,
                                     [c.mean + 4.5 for c in table1_cells])
        moved = rb.minimize_squared_loss(shifted_mean, logvar_surface,
                                         TARGET + 4.5, unit_box)
        for a, b in zip(moved.x_oc, base.x_oc):
            assert a == pytest.approx(b, abs=1e-6)

        # seeded byte-determinism of the full pipeline at 1, 2, 8 workers
        config = RunConfig(data_path=str(TABLE1), target=TARGET, B=39,
                           I=10, seed=17, alpha=ALPHA)
        outputs = []
        for threads in ("1", "2", "8"):
            monkeypatch.setenv("RSBOOT_THREADS", threads)
            t0 = time.perf_counter()
            report, ensemble = execute(config)
            bootstrap_seconds += time.perf_counter() - t0
            path = tmp_path / f"replicates_{threads}.csv"
            rb.write_replicates_csv(ensemble, path)
            outputs.append((report.to_json(), path.read_bytes()))
        monkeypatch.delenv("RSBOOT_THREADS")
        assert outputs[0] == outputs[1] == outputs[2]

        # the quantile index rule rejects every non-integral configuration
        for B, alpha in ((1000, 0.10), (999, 0.07), (100, 0.10),
                         (500, 0.05), (998, 0.10)):
            with pytest.raises(rb.ConfigError):
                rb.BootstrapConfig(B=B, I=100, seed=1,
                                   alpha=alpha).validate(k=2)
        assert rb.BootstrapConfig(B=999, I=100, seed=1,
                                  alpha=0.10).validate(k=2) == []

        # ellipse always contains its center; nested levels are monotone
        # (B=39 keeps every index integral at both levels for k=2)
        t0 = time.perf_counter()
        small = rb.BootstrapConfig(B=39, I=6, seed=5, alpha=ALPHA,
                                   run_inner=True)
        tiny = rb.run_bootstrap(table1, TARGET, unit_box, small)
        bootstrap_seconds += time.perf_counter() - t0
        ellipse_wide = rb.ellipse_region(tiny, 0.10)
        ellipse_narrow = rb.ellipse_region(tiny, 0.20)
        assert ellipse_wide.contains(ellipse_wide.center)
        assert ellipse_wide.radius_sq >= ellipse_narrow.radius_sq
        rect_wide = rb.bonferroni_region(tiny.point_estimate, tiny, 0.10)
        rect_narrow = rb.bonferroni_region(tiny.point_estimate, tiny, 0.20)
        for outer, inner in zip(rect_wide.intervals, rect_narrow.intervals):
            assert outer.lower <= inner.lower <= inner.upper <= outer.upper

        elapsed = time.perf_counter() - start
        assert elapsed - bootstrap_seconds < 60.0


def test_c6_coverage_sanity(unit_box):
    """Bonferroni rectangle coverage on a known synthetic truth.

    200 Monte Carlo trials at n=10, B=199 (index-valid at alpha=0.10
    after the per-axis split), nominal 90% joint level, required >= 80%.
    """
    with criterion("C6 rectangle coverage on synthetic truth"):
        start = time.perf_counter()
        mean_truth = rb.QuadraticSurface(2, PRINTED_MEAN_COEFS)
        logvar_truth = rb.QuadraticSurface(2, PRINTED_LOGVAR_COEFS)
        truth_optimum = rb.minimize_squared_loss(mean_truth, logvar_truth,
                                                 TARGET, unit_box)
        oracle = grid_objective_values(mean_truth, logvar_truth, TARGET,
                                       unit_box, 401)
        assert truth_optimum.objective <= oracle.min() + 1e-9
        theta = np.asarray(truth_optimum.x_oc)

        points = [(float(a), float(b)) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        means = np.array([rb.evaluate(mean_truth, p) for p in points])
        sds = np.array([np.exp(0.5 * rb.evaluate(logvar_truth, p))
                        for p in points])
        gen = np.random.default_rng(20260809)
        trials = 200
        hits = 0
        config_template = dict(B=199, I=100, alpha=ALPHA, run_inner=False)
        for trial in range(trials):
            cells = tuple(
                rb.DesignCell(p, tuple(gen.normal(m, s, size=10)))
                for p, m, s in zip(points, means, sds))
            table = rb.DesignTable(cells=cells, k=2, target=TARGET)
            config = rb.BootstrapConfig(seed=1000 + trial, **config_template)
            ensemble = rb.run_bootstrap(table, TARGET, unit_box, config)
            region = rb.bonferroni_region(ensemble.point_estimate, ensemble,
                                          ALPHA)
            hits += region.contains(theta)
        coverage = hits / trials
        print(f"  coverage {coverage:.3f} ({hits}/{trials})")
        assert coverage >= 0.80
        assert time.perf_counter() - start < 1800.0


def test_c7_squared_loss_dominance(table1_surfaces, table1_optimum, unit_box):
    """The squared-loss optimum never loses to the dual-response solution
    under the shared metric.  The fitted mean surface cannot reach the
    target inside the box (minimum ~50.185), so the dual solve runs with
    the target band widened to 0.25."""
    with criterion("C7 squared-loss dominance"):
        start = time.perf_counter()
        mean_surface, logvar_surface = table1_surfaces
        dual = rb.minimize_dual_response(mean_surface, logvar_surface,
                                         TARGET, unit_box, equality_tol=0.25)
        assert table1_optimum.objective <= dual.objective
        assert time.perf_counter() - start < 5.0
