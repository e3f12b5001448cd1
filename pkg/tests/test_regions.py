import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import ConfigError
from core.models import RegionDescriptor, RegionVariant
from core.regions import (
    certificate_summary,
    certified_resolvent,
    cubic_boundary,
    form_boundary,
    gap_arcs,
    gapped_arc_samples,
    member_annulus,
    member_delta,
    member_disc,
    member_form,
    member_form_alpha,
    member_form_rotated,
    member_gamma,
    member_halfplane,
    member_product,
    polyline_distance,
    region_boundary,
    split_predicate,
    x_of_tau,
)

THETA, G = np.pi / 3, 0.4


def _plane(half_width=1.5, n=81):
    axis = np.linspace(-half_width, half_width, n)
    return axis[None, :] + 1j * axis[:, None]


def test_elementary_regions():
    assert member_disc(0.3, 0.4)
    assert not member_disc(0.4, 0.4)
    assert member_annulus(0.5j, 0.4, 1.0)
    assert not member_annulus(1.0, 0.4, 1.0)
    assert member_halfplane(0.3, G, THETA)
    assert not member_halfplane(0.1, G, THETA)
    out = member_disc(np.array([0.0, 2.0]), 1.0)
    assert out.tolist() == [True, False]


@pytest.mark.parametrize(
    "z, inside",
    [
        (0.0, True),
        (0.5 * G, True),
        (1.0, True),
        (-1.0, False),
        (np.exp(1j * np.pi / 2), False),
        (np.exp(1j * (THETA + 0.05)), False),
    ],
)
def test_form_region_points(z, inside):
    assert member_form(THETA, G, z) is inside


def test_form_region_contains_gap_arc():
    phi = np.linspace(-THETA + 1e-3, THETA - 1e-3, 50)
    assert np.all(member_form(THETA, G, np.exp(1j * phi)))


def test_form_region_misses_spectrum_of_model_pair():
    phi = np.linspace(THETA, 2 * np.pi - THETA, 200)
    arc = np.exp(1j * phi)
    assert not np.any(member_form(THETA, G, arc))
    assert not np.any(member_form(THETA, G, G * arc))


@pytest.mark.parametrize("phi", [1.363, 1.384, 1.468, 2.5, np.pi])
def test_form_region_excludes_inner_circle_to_rounding(phi):
    z = G * np.exp(1j * phi)
    assert not member_form(THETA, G, z)
    assert not member_form(THETA, G, np.exp(1j * phi))


def test_form_region_keeps_points_near_boundary():
    # just inside g S on the gap side of the arc
    assert member_form(THETA, G, (G - 1e-9) * np.exp(0.5j))
    assert member_form(THETA, G, G * np.exp(0.5j))


def test_rotated_form_region():
    assert member_form_rotated(THETA, G, -1.0, rotation=np.pi)
    assert not member_form_rotated(THETA, G, 1.0, rotation=np.pi)


def test_inclusions():
    z = _plane(1.0)
    z = z[np.abs(z) <= 1.0]
    form = member_form(THETA, G, z)
    assert not np.any(member_delta(THETA, G, z) & ~form)
    for alpha in (0.05, 0.3, 0.9 * THETA):
        assert not np.any(member_form_alpha(THETA, G, alpha, z) & ~form)


def test_delta_region():
    assert member_delta(THETA, G, 0.0)
    assert member_delta(THETA, G, G / np.cos(THETA) - 1e-6)
    assert not member_delta(THETA, G, G / np.cos(THETA) + 1e-2)
    # unbounded for obtuse gaps
    assert member_delta(2.0, G, 50.0)


def test_gamma_region():
    assert member_gamma(0.5, 0.3, THETA, 0.0)
    assert not member_gamma(0.5, 0.3, THETA, -2.0)
    with pytest.raises(ConfigError):
        member_gamma(0.0, 0.3, THETA, 0.0)


def test_parameter_checks():
    with pytest.raises(ConfigError):
        member_form(0.0, G, 0.0)
    with pytest.raises(ConfigError):
        member_form(THETA, 1.0, 0.0)
    with pytest.raises(ConfigError):
        member_form_alpha(THETA, G, THETA, 0.0)
    with pytest.raises(ConfigError):
        cubic_boundary(2.0, G, 0.1)
    with pytest.raises(ConfigError):
        cubic_boundary(THETA, G, (1 + G) * np.cos(THETA))


def test_boundary_parametrization_endpoints():
    tau0 = 1.0 / (2.0 * np.cos(THETA))
    assert x_of_tau(THETA, G, tau0) == pytest.approx(0.0, abs=1e-15)
    assert x_of_tau(THETA, G, 1e12) == pytest.approx((1 + G) * np.cos(THETA))
    assert cubic_boundary(THETA, G, 0.0) == 0.0


@given(st.floats(min_value=0.05, max_value=np.pi / 2 - 0.05), st.floats(min_value=0.05, max_value=0.95))
def test_form_boundary_is_real_curve(theta, g):
    pieces = form_boundary(theta, g, n=200)
    for piece in pieces:
        x = piece.real
        assert np.all(x >= 0.0) and np.all(x < (1 + g) * np.cos(theta))
        assert np.allclose(piece.imag ** 2, cubic_boundary(theta, g, x), atol=1e-9)


def test_form_boundary_empty_for_obtuse_gap():
    assert form_boundary(2.0, G) == []


@pytest.mark.parametrize(
    "theta, g, expected",
    [
        (np.pi / 2, 0.1, True),
        (0.1, 0.1, False),
        (np.arccos(np.sqrt(4 * G / (1 + G) ** 2)) + 1e-6, G, True),
    ],
)
def test_split_predicate(theta, g, expected):
    ok, margin = split_predicate(theta, g)
    assert ok is expected
    assert (margin >= 0) is expected


def test_polyline_distance_is_a_lower_bound():
    circle = np.exp(2j * np.pi * np.arange(400) / 400)
    d = polyline_distance(np.array([0.0, 2.0]), circle)
    assert d[0] <= 1.0 and d[0] == pytest.approx(1.0, abs=1e-3)
    assert d[1] <= 1.0 and d[1] == pytest.approx(1.0, abs=1e-3)


def test_product_region_points():
    arc = gapped_arc_samples(THETA, 2000)
    tau = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 2000)])
    sigma_b = np.array([1.0, G])
    assert member_product(arc, sigma_b, 1.0, tau)
    assert member_product(arc, sigma_b, 0.5 * G, tau)
    assert not member_product(arc, sigma_b, -1.0, tau)
    with pytest.raises(ConfigError):
        member_product(arc, np.array([0.0, 1.0]), 1.0, tau)


def test_region_descriptor_dispatch():
    disc = RegionDescriptor(variant=RegionVariant.DISC, params={"radius": G})
    form = RegionDescriptor(variant=RegionVariant.FORM, params={"theta": THETA, "g": G}, rotation=np.pi)
    assert disc.contains(0.1) and not disc.contains(0.5)
    assert form.contains(-1.0) and not form.contains(1.0)
    assert len(region_boundary(disc)) == 1
    # cubic pieces, the line Re z = cos theta and g S
    assert len(region_boundary(form)) >= 3


def test_drift_gaps(drift):
    eta = np.pi / 3
    gaps = sorted(gap_arcs(drift, 0.0), key=lambda gap: abs(gap.rotation))
    assert len(gaps) == 2
    assert gaps[0].rotation == pytest.approx(0.0, abs=1e-6)
    assert abs(gaps[1].rotation) == pytest.approx(np.pi, abs=1e-6)
    for gap in gaps:
        assert gap.theta == pytest.approx(eta, abs=1e-5)

    smeared = gap_arcs(drift, 0.1)
    assert all(gap.theta == pytest.approx(eta - 0.1, abs=1e-5) for gap in smeared)
    assert gap_arcs(drift, 1.1) == []
    with pytest.raises(ConfigError):
        gap_arcs(drift, -0.1)


def test_drift_certificate(drift):
    cert = certified_resolvent(drift, 0.0)
    variants = [r.variant for r in cert.regions]
    assert variants.count(RegionVariant.DISC) == 1
    assert variants.count(RegionVariant.ANNULUS) == 1
    assert variants.count(RegionVariant.FORM) == 2
    assert cert.gap_ok and cert.splits
    assert cert.contains(0.1 * drift.g)
    assert cert.contains(0.9)
    assert not cert.contains(1j)

    summary = certificate_summary(cert)
    assert len(summary["regions"]) == 4
    assert all(r["activation"] for r in summary["regions"])


def test_split_certificate(drift_split):
    cert = certified_resolvent(drift_split, 0.1)
    assert cert.splits
    assert len(cert.split_margins) == 2
    assert all(m >= 0 for m in cert.split_margins)


def test_g0_certificate_has_no_disc_or_form(g0):
    cert = certified_resolvent(g0, 0.0)
    assert all(r.variant not in (RegionVariant.DISC, RegionVariant.FORM) for r in cert.regions)
    assert not cert.contains(1e-3)
