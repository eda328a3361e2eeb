"""Shared fixtures: the case-study table, its fits, and bootstrap runs."""

from pathlib import Path

import pytest

import rsboot as rb

DATA_DIR = Path(__file__).parent / "data"
TABLE1 = DATA_DIR / "table1.csv"

# Paper case-study constants used across test modules.
TARGET = 50.0
ALPHA = 0.10
FULL_B = 999
FULL_I = 100
FULL_SEED = 20260809


@pytest.fixture(scope="session")
def table1() -> rb.DesignTable:
    return rb.load_design_table(TABLE1, TARGET)


@pytest.fixture(scope="session")
def table1_cells(table1):
    return rb.summarize(table1)


@pytest.fixture(scope="session")
def table1_surfaces(table1, table1_cells):
    mean_surface, _ = rb.fit_ols(table1.points,
                                 [c.mean for c in table1_cells])
    logvar_surface, _ = rb.fit_ols(table1.points,
                                   [c.log_variance for c in table1_cells])
    return mean_surface, logvar_surface


@pytest.fixture(scope="session")
def unit_box() -> rb.Box:
    return rb.Box.unit(2)


@pytest.fixture(scope="session")
def table1_optimum(table1_surfaces, unit_box):
    mean_surface, logvar_surface = table1_surfaces
    return rb.minimize_squared_loss(mean_surface, logvar_surface, TARGET,
                                    unit_box)


@pytest.fixture(scope="session")
def full_ensemble(table1, unit_box) -> rb.BootstrapEnsemble:
    """One full-size run shared by the region tests and acceptance."""
    config = rb.BootstrapConfig(B=FULL_B, I=FULL_I, seed=FULL_SEED,
                                alpha=ALPHA, run_inner=True)
    return rb.run_bootstrap(table1, TARGET, unit_box, config)


@pytest.fixture(scope="session")
def small_ensemble(table1, unit_box) -> rb.BootstrapEnsemble:
    """Quick outer-only ensemble for structural tests."""
    config = rb.BootstrapConfig(B=199, I=100, seed=7, alpha=ALPHA,
                                run_inner=False)
    return rb.run_bootstrap(table1, TARGET, unit_box, config)
