"""Shared fixtures."""
from __future__ import annotations

import numpy as np
import pytest

from app.core.settings import get_settings
from app.services.surface_service import make_grid, make_surface


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point outputs and the run ledger at a per-test directory."""
    monkeypatch.setenv("SURFRECON_DATABASE_URL", f"sqlite:///{tmp_path / 'ledger.db'}")
    monkeypatch.setenv("SURFRECON_OUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("SURFRECON_LOG_EVERY", "1000")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def baseline_grid():
    """L = 8, N = 240: the default experiment grid."""
    return make_grid(8.0, 240)


@pytest.fixture(scope="session")
def baseline_surface(baseline_grid):
    """l = 2/3, peak-to-trough 0.4, seed 3."""
    return make_surface(baseline_grid, 2.0 / 3.0, 0.4, seed=3)


@pytest.fixture(scope="session")
def gentle_surface():
    """Smooth analytic profile on L = 8, N = 240 with nonzero curvature."""
    from app.services.surface_service import from_function, taper_weight

    grid = make_grid(8.0, 240)
    return from_function(grid, lambda x: 0.15 * np.sin(0.9 * x) * taper_weight(x, 8.0, 1.0))
