import asyncio
import math

import numpy as np
import pytest

from core import acceptance
from core.acceptance import (
    CHECKS,
    AcceptanceSizes,
    bloch_modulus_bound,
    fz_envelope,
    run_acceptance,
    run_check,
)
from core.bandop import tridiag_blocks
from core.errors import ConfigError, NumericFailure


@pytest.fixture(scope="module")
def quick_sizes():
    return AcceptanceSizes.quick()


@pytest.mark.parametrize("name", list(CHECKS))
def test_quick_check_passes(name, quick_sizes):
    result = run_check(name, quick_sizes)
    assert result.name == name
    assert result.passed, result.details
    assert result.elapsed >= 0.0


def test_failing_check_is_reported_not_raised(monkeypatch, quick_sizes):
    def broken(sizes):
        raise NumericFailure("no convergence")

    monkeypatch.setitem(acceptance.CHECKS, "special", broken)
    result = run_check("special", quick_sizes)
    assert not result.passed
    assert math.isnan(result.metric)
    assert "no convergence" in result.details["error"]


def test_results_keep_battery_order(tmp_settings):
    results = asyncio.run(run_acceptance(quick=True, names=["special", "doubling"]))
    assert [r.name for r in results] == ["special", "doubling"]


def test_unknown_check(tmp_settings):
    with pytest.raises(ConfigError):
        asyncio.run(run_acceptance(quick=True, names=["nope"]))


@pytest.mark.slow
def test_full_battery(tmp_settings):
    results = asyncio.run(run_acceptance())
    failed = [r.name for r in results if not r.passed]
    assert not failed


def test_quick_sizes_keep_calibrated_truncation(quick_sizes):
    assert quick_sizes.fz_m == AcceptanceSizes().fz_m == 256
    assert quick_sizes.annulus_words < AcceptanceSizes().annulus_words


def test_fz_envelope():
    assert fz_envelope(0.0) == pytest.approx(1e-2)
    assert fz_envelope(0.3) == pytest.approx(1e-2)
    assert fz_envelope(0.9) == pytest.approx(0.3)
    # measured levels at M = 256, with room to spare
    for radius, measured in ((0.3, 2.5e-3), (0.8, 2.3e-2), (0.9, 7.5e-2)):
        assert fz_envelope(radius) >= 4 * measured - 1e-12
    r = np.linspace(0.0, 0.9, 50)
    assert np.all(np.diff(fz_envelope(r)) >= 0)


def test_hull_g0_reports_envelope(quick_sizes):
    result = run_check("hull_g0", quick_sizes)
    assert result.passed, result.details
    assert result.details["fz_envelope_ratio"] <= 1.0
    assert 0.0 < result.details["fz_covered_at_1e_2"] <= 1.0


def test_annulus_bound_on_period_eight_word(drift):
    x = 2.0 * np.pi * np.arange(256) / 256 - np.pi
    word = [0.1, -2.0, 0.7, 3.0, -0.4, 1.2, -2.9, 0.5]
    bound = bloch_modulus_bound(drift, [word], x)
    r_v = tridiag_blocks(drift).r_v
    assert bound <= r_v + 1e-9
    assert bound >= drift.g - 1e-9
    with pytest.raises(ConfigError):
        bloch_modulus_bound(drift, [], x)


def test_polar_check_holds_default_tolerance(quick_sizes):
    result = run_check("polar", quick_sizes)
    assert result.passed, result.details
    assert result.details["residual"] < 1e-12
    assert result.details["unitarity"] < 1e-12


def test_regions_check_has_no_inclusion_violations(quick_sizes):
    result = run_check("regions", quick_sizes)
    assert result.details["inclusion_violations"] == 0
