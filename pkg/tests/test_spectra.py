import asyncio

import numpy as np
import pytest

from core.bandop import build_polar, build_T, realize_phases, zero_phases
from core.errors import ConfigError
from core.regions import certified_resolvent
from core.spectra import (
    compare_polar,
    disc_consistency,
    eigvals,
    indicator_violations,
    numeric_polar,
    operator_norm,
    pseudospectrum,
    pseudospectrum_async,
    resolvent_norm,
    sigma_min,
    sigma_min_many,
    sigma_min_many_async,
    spectral_radius,
)


@pytest.fixture
def drift_T(drift):
    return build_T(drift, realize_phases("uniform", 0.2, 4, 8), 8)


def test_eigvals_with_residuals(drift_T):
    est = eigvals(drift_T, with_residuals=True)
    assert est.dim == 16
    assert np.all(est.residuals <= est.tolerance)
    reference = np.linalg.eigvals(drift_T.data)
    for z in est.eigenvalues:
        assert np.min(np.abs(reference - z)) <= 1e-8
    assert est.source["kind"] == "T" and est.source["M"] == 8


def test_eigvals_rejects_bad_input():
    with pytest.raises(ConfigError):
        eigvals(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        eigvals(np.zeros((1025, 1025)))


def test_contraction_bounds(drift_T, drift):
    assert operator_norm(drift_T) <= 1.0 + 1e-12
    assert spectral_radius(drift_T) <= 1.0 + 1e-12
    # T = VK with K >= g
    assert sigma_min(drift_T) >= drift.g - 1e-12


def test_resolvent_norm_at_eigenvalue():
    m = np.diag([1.0, 2.0]).astype(np.complex128)
    assert resolvent_norm(m, 1.0) == float("inf")
    assert resolvent_norm(m, 0.0) == pytest.approx(1.0)


def test_async_sigma_min_keeps_order(drift_T):
    zs = np.linspace(-1, 1, 150) * (1 + 0.3j)
    serial = sigma_min_many(drift_T, zs)
    parallel = asyncio.run(sigma_min_many_async(drift_T, zs, max_workers=3, chunk=16))
    assert np.array_equal(serial, parallel)


def test_pseudospectrum_grids_agree(drift_T):
    grid = pseudospectrum(drift_T, resolution=9, half_width=1.1)
    tiled = asyncio.run(pseudospectrum_async(drift_T, resolution=9, half_width=1.1, max_workers=2))
    assert grid.values.shape == (9, 9)
    assert np.allclose(grid.values, tiled.values)
    assert grid.label == "pseudospectrum"
    assert grid.epsilons == [1e-3, 1e-2, 1e-1]


def test_pseudospectrum_axes(drift, drift_T):
    open_T = build_T(drift, zero_phases(4), 4, "open")
    grid = pseudospectrum(open_T, re=[-1.0, 0.0, 1.0], im=[-0.5, 0.5])
    assert grid.values.shape == (2, 3)
    assert grid.label == "truncation pseudospectrum"
    with pytest.raises(ConfigError):
        pseudospectrum(drift_T, re=[0.0, 1.0])
    with pytest.raises(ConfigError):
        pseudospectrum(drift_T, re=[1.0, 0.0], im=[0.0, 1.0])
    with pytest.raises(ConfigError):
        pseudospectrum(drift_T, resolution=1)


@pytest.mark.parametrize("coin", ["drift", "g0"])
def test_numeric_polar_matches_analytic(coin, request):
    emb = request.getfixturevalue(coin)
    phases = realize_phases("torus", 0.0, 2, 6)
    polar = build_polar(emb, phases, 6)
    errors = compare_polar(polar, *numeric_polar(build_T(emb, phases, 6)))
    assert errors["k_error"] <= 1e-9
    assert errors["v_error"] <= 1e-9


def test_disc_consistency(drift_T, drift):
    grid = pseudospectrum(drift_T, resolution=21, half_width=1.2)
    passed, worst = disc_consistency(grid, drift.g, 1e-2)
    assert passed and worst >= -1e-10


def test_disc_region_has_no_deep_indicator_nodes(drift):
    M = 16
    t_mat = build_T(drift, zero_phases(M), M)
    grid = pseudospectrum(t_mat, resolution=41, half_width=1.2)
    disc = certified_resolvent(drift, 0.0).regions[0]
    assert indicator_violations(grid, disc.contains, 1e-2) == 0
    everywhere = indicator_violations(grid, lambda z: np.ones(np.shape(z), dtype=bool), 1e-2)
    assert everywhere == int(grid.indicator(1e-2).sum())
