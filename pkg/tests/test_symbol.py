import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.bandop import build_T, build_Ttilde, periodic_phases, realize_phases
from core.coin import embed, random_contraction
from core.errors import ConfigError
from core.models import PhaseDistribution, PhaseField
from core.symbol import (
    annulus_hausdorff,
    bloch_periodic,
    default_grid,
    ellipse_points,
    ergodic_hull,
    hausdorff,
    hull_words,
    lambda_pm,
    swept_ellipse_annulus,
    symbol_T,
    ti_spectrum,
    ttilde_symbol,
    v_symbol_arcs,
    vjj_symbol,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _covered(a, b, tol):
    """Every point of a lies within tol of b."""
    a, b = np.ravel(a), np.ravel(b)
    return all(np.min(np.abs(b - z)) <= tol for z in a)


@given(seeds, st.floats(min_value=0.0, max_value=2 * np.pi))
def test_lambda_pm_are_symbol_eigenvalues(seed, x):
    emb = embed(random_contraction(seed))
    roots = lambda_pm(emb, x)
    eigs = np.linalg.eigvals(symbol_T(emb, x))
    assert _covered(roots, eigs, 1e-10)
    assert np.prod(roots) == pytest.approx(emb.det(), abs=1e-12)


def test_lambda_pm_at_g0(g0):
    roots = lambda_pm(g0, default_grid(64))
    assert roots.shape == (64, 2)
    assert np.all(np.min(np.abs(roots), axis=-1) <= 1e-14)


def test_ti_spectrum_rejects_empty_grid(drift):
    with pytest.raises(ConfigError):
        ti_spectrum(drift, [])


@pytest.mark.parametrize("word", [[0.0, 0.0], [0.3, -0.1], [0.2, -0.4, 0.1, 0.5]])
def test_periodic_truncation_matches_bloch_spectrum(drift, word):
    M = 8
    periods = 2 * M // len(word)
    t_mat = build_T(drift, periodic_phases(word, M), M)
    numeric = np.linalg.eigvals(t_mat.data)
    bloch = bloch_periodic(drift, word, default_grid(periods)).eigenvalues
    assert bloch.size == numeric.size
    assert _covered(bloch, numeric, 1e-7)
    assert _covered(numeric, bloch, 1e-7)


def test_bloch_periodic_checks_words(drift):
    with pytest.raises(ConfigError):
        bloch_periodic(drift, [0.1, 0.2, 0.3])
    support = PhaseField(distribution=PhaseDistribution.UNIFORM, epsilon=0.1)
    with pytest.raises(ConfigError):
        bloch_periodic(drift, [0.5, 0.0], support=support)


def test_doubled_symbol_matches_doubled_truncation(drift):
    word = [0.1, -0.3, 0.2, 0.4]
    M = 8
    periods = M // (len(word) // 2)
    tt = build_Ttilde(drift, periodic_phases(word, M), M)
    numeric = np.linalg.eigvals(tt.data)
    sym = ttilde_symbol(drift, word, default_grid(periods))
    assert sym.shape == (periods, 2, 2)
    assert _covered(np.linalg.eigvals(sym), numeric, 1e-8)
    with pytest.raises(ConfigError):
        ttilde_symbol(drift, [0.0, 0.0], 0.0)


def test_drift_v_arcs(drift):
    eta = np.pi / 3
    arcs = v_symbol_arcs(drift, default_grid(2048))
    assert len(arcs) == 2
    expected = [(-np.pi + eta, -eta), (eta, np.pi - eta)]
    for (start, end), (s0, e0) in zip(arcs, expected):
        assert start == pytest.approx(s0, abs=1e-5)
        assert end == pytest.approx(e0, abs=1e-5)


def test_full_circle_v_spectrum():
    arcs = v_symbol_arcs(embed(np.diag([1.0, 0.5])), default_grid(512))
    assert arcs == [(-np.pi, np.pi)]


def test_diagonal_compression_ellipse(drift):
    ellipse = vjj_symbol(drift, 1)
    r_in, r_out = swept_ellipse_annulus(ellipse)
    mods = np.abs(ellipse_points(ellipse, default_grid(1024)))
    assert mods.max() == pytest.approx(r_out, abs=1e-5)
    assert mods.min() == pytest.approx(r_in, abs=1e-5)
    with pytest.raises(ConfigError):
        vjj_symbol(drift, 3)


def test_hull_words_are_nested():
    phases = PhaseField(distribution=PhaseDistribution.UNIFORM, epsilon=0.2)
    words = hull_words([2, 4, 8], 3, phases, seed=1)
    assert [len(words[ell]) for ell in (2, 4, 8)] == [3, 6, 9]
    for short, long_ in ((2, 4), (4, 8)):
        for w in words[short]:
            assert w + w in words[long_]
    for batch in words.values():
        assert all(abs(p) <= 0.2 for w in batch for p in w)
    with pytest.raises(ConfigError):
        hull_words([3], 1, phases, seed=1)


def test_hull_words_include_fresh_long_words():
    phases = PhaseField(distribution=PhaseDistribution.TORUS)
    words = hull_words([2, 4, 8], 20, phases, seed=3)
    for ell in (4, 8):
        half = ell // 2
        fresh = [w for w in words[ell] if w[:half] != w[half:]]
        assert len(fresh) == 20


def test_point_hull_uses_one_word():
    phases = PhaseField(distribution=PhaseDistribution.POINT, theta0=0.4)
    words = hull_words([2, 4], 5, phases, seed=0)
    assert words[2] == [[0.4, 0.4]]
    assert len(words[4]) == 1


def test_torus_hull_at_g0_is_exact(g0):
    hull = ergodic_hull(g0, lmax=4, words_per_l=4, xgrid=default_grid(64), seed=3)
    assert hull.exact and hull.contains_origin
    assert hull.annulus is not None
    assert set(hull.by_length) == {2, 4}
    assert hull.points.size == sum(v.size for v in hull.by_length.values())


def test_uniform_hull_is_a_lower_bound(drift):
    phases = realize_phases("uniform", 0.2, 0, 4)
    hull = ergodic_hull(drift, lmax=4, words_per_l=2, xgrid=default_grid(32), phases=phases)
    assert not hull.exact and hull.annulus is None


def test_distances():
    a = np.array([0.0, 1.0])
    b = np.array([0.0, 1.0, 1.0 + 0.5j])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, b) == pytest.approx(0.5)
    ring = np.exp(2j * np.pi * np.arange(2048) / 2048)
    assert annulus_hausdorff(ring, 1.0, 1.0, n_radial=1) <= 1e-2
    assert annulus_hausdorff(0.5 * ring, 1.0, 1.0, n_radial=1) == pytest.approx(0.5)
