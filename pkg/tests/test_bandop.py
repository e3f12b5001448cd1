import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.bandop import (
    alpha_delta_zero_spectrum,
    assemble,
    beta_gamma_zero_spectrum,
    build_polar,
    build_T,
    build_Ttilde,
    build_Ttilde_factorized,
    classify_structure,
    compression,
    compression_norms,
    matches_diagonal_pattern,
    periodic_phases,
    phase_factorization,
    realize_phases,
    tridiag_blocks,
    v11_norm_closed_form,
    zero_phases,
)
from core.coin import embed, random_contraction, unitarity_defect
from core.errors import ConfigError
from core.models import BoundaryCondition, MatrixKind, PhaseField

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_assemble_layout():
    coin = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.complex128)
    omega = np.zeros(6)
    mat = assemble(coin, omega, periodic=True)
    # column 2 (j = 1): gamma, delta at row 1 and alpha, beta at row 4
    assert mat[1, 2] == 3.0 and mat[1, 3] == 4.0
    assert mat[4, 2] == 1.0 and mat[4, 3] == 2.0
    # column 0 wraps: row -1 -> 5
    assert mat[5, 0] == 3.0 and mat[2, 0] == 1.0
    assert np.count_nonzero(mat) == 12

    open_mat = assemble(coin, omega, periodic=False)
    assert open_mat[5, 0] == 0.0
    # last cell loses its downward entries
    assert open_mat[:, 4:].nonzero()[0].tolist() == [3, 3]


def test_entry_carries_row_phase():
    omega = np.linspace(0.1, 0.8, 8)
    coin = np.array([[0.5, 0.1], [0.2, 0.3]], dtype=np.complex128)
    mat = assemble(coin, omega, periodic=True)
    base = assemble(coin, np.zeros(8), periodic=True)
    assert np.allclose(mat, np.diag(np.exp(1j * omega)) @ base)


@pytest.mark.parametrize("bc", ["periodic", "open"])
def test_phase_factorization(drift, bc):
    phases = realize_phases("uniform", 0.4, 7, 6)
    d, t0 = phase_factorization(drift, phases, 6, bc)
    t_mat = build_T(drift, phases, 6, bc)
    assert np.allclose(t_mat.data, np.diag(d) @ t0.data, atol=1e-14)


def test_realize_phases_is_reproducible():
    a = realize_phases("uniform", 0.3, 11, 5)
    b = realize_phases("uniform", 0.3, 11, 5)
    assert np.array_equal(a.realized, b.realized)
    assert len(a.realized) == 2 * 5 + 4
    assert a.in_support(a.realized)
    assert np.all(np.abs(a.realized) <= 0.3)
    assert not np.array_equal(a.realized, realize_phases("uniform", 0.3, 12, 5).realized)


def test_point_and_torus_phases():
    point = realize_phases("point", 0.0, 0, 4, theta0=0.25)
    assert np.all(point.realized == 0.25)
    torus = realize_phases("torus", 0.0, 3, 4)
    assert np.all(np.abs(torus.realized) <= np.pi)


def test_phase_errors():
    with pytest.raises(ConfigError):
        realize_phases("uniform", 0.1, 0, 1)
    with pytest.raises(ConfigError):
        realize_phases("uniform", -0.1, 0, 4)
    with pytest.raises(ConfigError):
        periodic_phases([0.1, 0.2, 0.3, 0.4], 3)
    with pytest.raises(ValueError):
        periodic_phases([0.1, 0.2, 0.3], 3)


def test_periodic_phases_repeat_the_word():
    field = PhaseField.from_word([0.1, -0.2, 0.3, 0.0], 4)
    assert field.phase(-1) == pytest.approx(0.0)
    assert field.phase(5) == pytest.approx(-0.2)
    assert np.allclose(field.site_phases(8), [0.1, -0.2, 0.3, 0.0] * 2)


def test_build_T_rejects_small_M(drift):
    with pytest.raises(ConfigError):
        build_T(drift, zero_phases(4), 1)


@given(seeds)
def test_polar_factors(seed):
    emb = embed(random_contraction(seed))
    if emb.g > 0.99:
        return
    phases = realize_phases("torus", 0.0, seed, 5)
    polar = build_polar(emb, phases, 5, tol=1e-10)
    assert polar.residual <= 1e-10
    assert unitarity_defect(polar.V.data) <= 1e-10
    assert polar.V.kind == MatrixKind.V
    k_eigs = np.sort(np.linalg.eigvalsh(polar.K.data))
    expected = np.sort(np.array([emb.g] * 5 + [1.0] * 5))
    assert np.allclose(k_eigs, expected, atol=1e-10)
    assert np.allclose(polar.P1.data + polar.P2.data, np.eye(10), atol=1e-12)


def test_unitary_coin_polar_is_trivial():
    u = np.array([[0.6, 0.8], [-0.8, 0.6]])
    polar = build_polar(embed(u), zero_phases(4), 4)
    assert polar.unitary_limit
    assert np.allclose(polar.K.data, np.eye(8))
    with pytest.raises(ConfigError):
        compression(polar, 1, 1)


def test_drift_blocks(drift):
    blocks = tridiag_blocks(drift)
    assert blocks.gap_ok
    assert blocks.r_v == pytest.approx(0.7927, abs=5e-4)
    assert blocks.norm(1, 1) == pytest.approx(v11_norm_closed_form(drift), abs=1e-12)


def test_v11_closed_form_on_random_coins(random_embeddings):
    for emb in random_embeddings:
        assert tridiag_blocks(emb).norms["11"] == pytest.approx(v11_norm_closed_form(emb), abs=1e-10)


def test_compression_is_tridiagonal(drift):
    M = 8
    polar = build_polar(drift, zero_phases(M), M)
    blocks = tridiag_blocks(drift)
    for key in ("11", "12", "21", "22"):
        c = compression(polar, int(key[0]), int(key[1]))
        band = np.zeros_like(c)
        for k in range(M):
            band[(k - 1) % M, k] = blocks.w_plus[key]
            band[(k + 1) % M, k] = blocks.w_minus[key]
        assert np.allclose(c, band, atol=1e-12), key


def test_truncated_norms_approach_block_norms(random_embeddings):
    M = 64
    for emb in random_embeddings[:4]:
        norms = compression_norms(build_polar(emb, zero_phases(M), M))
        blocks = tridiag_blocks(emb)
        for key, value in norms.items():
            assert value <= blocks.norms[key] + 1e-10
            assert value >= blocks.norms[key] - 1e-2


def test_doubled_operator_factorizes(drift):
    M = 6
    phases = realize_phases("uniform", 0.5, 2, M)
    tt = build_Ttilde(drift, phases, M)
    assert tt.kind == MatrixKind.TTILDE and tt.dim == M
    b_even, b_odd, product = build_Ttilde_factorized(drift, phases, M)
    assert np.allclose(tt.data, product, atol=1e-13)
    assert np.allclose(b_odd @ b_even, product)


def test_doubled_operator_spectrum_is_part_of_T_squared(drift):
    M = 6
    phases = realize_phases("uniform", 0.5, 5, M)
    t2 = np.linalg.eigvals(np.linalg.matrix_power(build_T(drift, phases, M).data, 2))
    for z in np.linalg.eigvals(build_Ttilde(drift, phases, M).data):
        assert np.min(np.abs(t2 - z)) <= 1e-6


def test_doubled_operator_needs_even_M(drift):
    with pytest.raises(ConfigError):
        build_Ttilde(drift, zero_phases(5), 5)
    with pytest.raises(ConfigError):
        build_Ttilde_factorized(drift, zero_phases(5), 5)


def test_beta_gamma_zero_coin():
    emb = embed(np.diag([np.exp(0.4j), 0.3 * np.exp(-1.1j)]))
    assert matches_diagonal_pattern(emb)
    report = classify_structure(emb)
    assert report.special_beta_gamma_zero and not report.special_alpha_delta_zero
    assert report.special_g == pytest.approx(0.3)
    assert beta_gamma_zero_spectrum(emb) == pytest.approx((0.3, 1.0))

    M = 6
    eigs = np.linalg.eigvals(build_T(emb, realize_phases("uniform", 0.6, 1, M), M).data)
    radii = np.abs(eigs)
    assert np.all(np.minimum(np.abs(radii - 0.3), np.abs(radii - 1.0)) <= 1e-10)


def test_alpha_delta_zero_spectrum():
    g, psi = 0.4, 0.7
    emb = embed(np.array([[0.0, g], [np.exp(1j * psi), 0.0]]))
    report = classify_structure(emb)
    assert report.special_alpha_delta_zero
    assert report.special_g == pytest.approx(g)
    M = 4
    phases = realize_phases("uniform", 0.8, 9, M)
    closed = alpha_delta_zero_spectrum(emb, phases, M)
    numeric = np.linalg.eigvals(build_T(emb, phases, M).data)
    assert closed.shape == (2 * M,)
    for z in closed:
        assert np.min(np.abs(numeric - z)) <= 1e-10
    with pytest.raises(ConfigError):
        alpha_delta_zero_spectrum(embed(random_contraction(0)), phases, M)


def test_generic_coin_is_not_special(drift):
    report = classify_structure(drift)
    assert report.cnu
    assert not report.special_alpha_delta_zero and not report.special_beta_gamma_zero
    assert not report.v_diagonal and not report.v_offdiagonal


def test_band_matrix_rows(drift):
    t_mat = build_T(drift, zero_phases(3), 3, BoundaryCondition.OPEN)
    rows = t_mat.to_rows()
    assert len(rows) == np.count_nonzero(t_mat.data)
    assert t_mat.manifest["M"] == 3 and t_mat.manifest["bc"] == "open"
