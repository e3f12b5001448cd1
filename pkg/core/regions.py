"""
Certified resolvent-set geometry.

Every region here is open and lies in the resolvent set of T = V K under the
hypothesis stated in its `activation` string. Membership predicates are
vectorized over z; boundary generators return polylines for export.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from core.bandop import tridiag_blocks
from core.config import get_settings
from core.errors import ConfigError
from core.models import (
    Certificate,
    GapArc,
    RegionDescriptor,
    RegionVariant,
    TridiagonalBlockData,
    UnitaryEmbedding,
)
from core.symbol import v_symbol_arcs

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# relative margin on the open tau conditions of the form regions
FORM_SLACK = 1e-12


def _z(z: Any) -> NDArray[np.complex128]:
    return np.asarray(z, dtype=np.complex128)


def _check_theta_g(theta: float, g: float) -> None:
    if not 0.0 < theta < np.pi:
        raise ConfigError(f"gap half-angle must lie in (0, pi), got {theta}")
    if not 0.0 < g < 1.0:
        raise ConfigError(f"g must lie in (0, 1), got {g}")


def _result(out: NDArray[np.bool_]) -> Any:
    return bool(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# elementary regions
# ---------------------------------------------------------------------------

def member_disc(z: Any, radius: float, center: complex = 0.0) -> Any:
    return _result(np.abs(_z(z) - center) < radius)


def member_annulus(z: Any, inner: float, outer: float) -> Any:
    r = np.abs(_z(z))
    return _result((r > inner) & (r < outer))


def member_halfplane(z: Any, gamma: float, theta: float) -> Any:
    """R_gamma(theta) = {Re z > gamma cos(theta)}."""
    return _result(_z(z).real > gamma * np.cos(theta))


# ---------------------------------------------------------------------------
# form regions
# ---------------------------------------------------------------------------

def _linear_tau_feasible(
    conditions: Sequence[Tuple[NDArray, NDArray]],
    shape: Tuple[int, ...],
    slack: float = FORM_SLACK,
) -> NDArray[np.bool_]:
    """
    Whether some tau > 0 satisfies a_k tau < b_k for every k.

    Each condition is an open interval in tau; the system is feasible iff the
    largest lower end lies below the smallest upper end. Every b_k is first
    lowered by `slack` relative to max(1, |b_k|), so points whose slack is
    pure rounding (|z| = g or |z| = 1 up to an ulp) stay outside.
    """
    lo = np.zeros(shape)
    hi = np.full(shape, np.inf)
    ok = np.ones(shape, dtype=bool)
    for a, b in conditions:
        a = np.broadcast_to(a, shape)
        b = np.broadcast_to(b, shape)
        b = b - slack * np.maximum(1.0, np.abs(b))
        pos, neg, zero = a > 0, a < 0, a == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(a != 0, b / np.where(a != 0, a, 1.0), 0.0)
        hi = np.where(pos, np.minimum(hi, ratio), hi)
        lo = np.where(neg, np.maximum(lo, ratio), lo)
        ok &= ~(zero & (b <= 0))
    return ok & (lo < hi)


def member_form(theta: float, g: float, z: Any) -> Any:
    """
    Membership in the union over tau > 0 of B_tau(d_tau) and B_{g tau}(g d_tau),
    d_tau = |tau - e^{i theta}|.

    Both disc conditions are linear in tau:
        2 tau (cos theta - Re z)   < 1 - |z|^2
        2 tau (g cos theta - Re z) < (g^2 - |z|^2) / g
    """
    return member_form_alpha(theta, g, 0.0, z)


def member_form_alpha(theta: float, g: float, alpha: float, z: Any) -> Any:
    """Same union with centres on the ray e^{i alpha} R_+, |alpha| < theta."""
    _check_theta_g(theta, g)
    if abs(alpha) >= theta:
        raise ConfigError(f"rotation {alpha} must be smaller than the gap half-angle {theta}")
    z = _z(z)
    c = np.cos(theta - abs(alpha))
    re = (z * np.exp(-1j * alpha)).real
    mod2 = np.abs(z) ** 2
    conditions = [
        (2.0 * (c - re), 1.0 - mod2),
        (2.0 * (g * c - re), (g * g - mod2) / g),
    ]
    return _result(_linear_tau_feasible(conditions, z.shape))


def member_form_rotated(theta: float, g: float, z: Any, rotation: float = 0.0) -> Any:
    """Form region of a gap whose bisector points at angle `rotation`."""
    return member_form(theta, g, _z(z) * np.exp(-1j * rotation))


def x_of_tau(theta: float, g: float, tau: Any) -> Any:
    """Abscissa of the boundary point of D(theta) produced by tau >= 1 / (2 cos theta)."""
    return -(1.0 + g) / (2.0 * np.asarray(tau, dtype=np.float64)) + (1.0 + g) * np.cos(theta)


def cubic_boundary(theta: float, g: float, x: Any) -> Any:
    """
    y^2 = x (x^2 - x (1 + g) cos theta + g) / ((1 + g) cos theta - x).

    Raises:
        ConfigError: If theta >= pi/2 or x lies outside [0, (1 + g) cos theta)
    """
    _check_theta_g(theta, g)
    if theta >= np.pi / 2:
        raise ConfigError("the cubic boundary exists only for theta < pi/2")
    x = np.asarray(x, dtype=np.float64)
    top = (1.0 + g) * np.cos(theta)
    if np.any(x < 0.0) or np.any(x >= top):
        raise ConfigError(f"x must lie in [0, {top:.12g})")
    y2 = x * (x * x - x * top + g) / (top - x)
    return float(y2) if y2.ndim == 0 else y2


def member_delta(theta: float, g: float, z: Any) -> Any:
    """
    z in B_0(g) u Delta_g(theta).

    Delta_g(theta) is cut out by the lines through g e^{+-i theta} and
    g / cos theta together with Re z > g cos theta. For theta >= pi/2 the same
    three half-planes give the unbounded region.
    """
    _check_theta_g(theta, g)
    z = _z(z)
    tri = (
        ((z * np.exp(-1j * theta)).real < g)
        & ((z * np.exp(1j * theta)).real < g)
        & (z.real > g * np.cos(theta))
    )
    return _result((np.abs(z) < g) | tri)


def member_gamma(rho: float, rho2: float, theta: float, z: Any) -> Any:
    """z in (B_{-e^{i theta} rho}(rho + rho2) n B_{-e^{-i theta} rho}(rho + rho2) n R_rho2(theta)) u B_0(rho2)."""
    if rho <= 0 or rho2 <= 0:
        raise ConfigError(f"radii must be positive, got {rho}, {rho2}")
    if not 0.0 < theta < np.pi:
        raise ConfigError(f"theta must lie in (0, pi), got {theta}")
    z = _z(z)
    r = rho + rho2
    lens = (
        (np.abs(z + rho * np.exp(1j * theta)) < r)
        & (np.abs(z + rho * np.exp(-1j * theta)) < r)
        & (z.real > rho2 * np.cos(theta))
    )
    return _result(lens | (np.abs(z) < rho2))


def split_predicate(theta: float, g: float) -> Tuple[bool, float]:
    """cos^2 theta <= 4g / (1 + g)^2, with the margin 4g/(1+g)^2 - cos^2 theta."""
    margin = 4.0 * g / (1.0 + g) ** 2 - np.cos(theta) ** 2
    return bool(margin >= 0.0), float(margin)


# ---------------------------------------------------------------------------
# product regions
# ---------------------------------------------------------------------------

def _segments(samples: NDArray[np.complex128]) -> Tuple[NDArray[np.complex128], NDArray[np.complex128], float]:
    """Polyline segments through consecutive samples and the largest chord sagitta."""
    pts = samples.ravel()
    if pts.size == 1:
        return pts, pts, 0.0
    steps = np.abs(np.diff(pts))
    typical = float(np.median(steps))
    joined = steps <= 2.0 * typical + 1e-15
    start = np.concatenate([pts[:-1][joined], pts])
    end = np.concatenate([pts[1:][joined], pts])
    h = float(steps[joined].max()) if joined.any() else 0.0
    return start, end, h * h / 8.0


def polyline_distance(tau: Any, samples: Any, chunk: int = 256) -> NDArray[np.float64]:
    """
    Lower bound for dist(tau, S) when S is a union of unit-curvature arcs
    sampled in order: distance to the chord polyline minus the largest sagitta.
    """
    tau = _z(tau).ravel()
    start, end, sagitta = _segments(_z(samples))
    seg = end - start
    seg_len2 = np.abs(seg) ** 2
    out = np.empty(tau.size)
    for k in range(0, tau.size, chunk):
        t = tau[k:k + chunk, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(seg_len2 > 0, ((t - start) * seg.conj()).real / seg_len2, 0.0)
        u = np.clip(u, 0.0, 1.0)
        out[k:k + chunk] = np.min(np.abs(t - (start + u * seg)), axis=1)
    return np.maximum(out - sagitta, 0.0)


def member_product_grid(
    sigma_a: Any,
    sigma_b: Any,
    z: Any,
    tau_grid: Any,
    chunk: int = 64,
) -> NDArray[np.bool_]:
    """
    Whether some tau in the grid satisfies |z - tau b| < |b| dist(tau, sigma_a)
    for every b in sigma_b. Evaluated over tiles of z.

    Raises:
        ConfigError: On empty inputs or 0 in sigma_b
    """
    sigma_a, sigma_b, tau = _z(sigma_a).ravel(), _z(sigma_b).ravel(), _z(tau_grid).ravel()
    if sigma_a.size == 0 or sigma_b.size == 0 or tau.size == 0:
        raise ConfigError("product region needs nonempty spectra samples and tau grid")
    if np.any(sigma_b == 0):
        raise ConfigError("sigma_b must not contain 0")
    z = _z(z)
    flat = z.ravel()
    dist = polyline_distance(tau, sigma_a)
    keep = dist > 0
    tau, dist = tau[keep], dist[keep]
    radii = np.abs(sigma_b)[:, None] * dist[None, :]
    centres = sigma_b[:, None] * tau[None, :]
    out = np.zeros(flat.size, dtype=bool)
    for k in range(0, flat.size, chunk):
        zz = flat[k:k + chunk, None, None]
        inside = np.abs(zz - centres[None]) < radii[None]
        out[k:k + chunk] = np.any(np.all(inside, axis=1), axis=1)
    return out.reshape(z.shape)


def member_product(sigma_a: Any, sigma_b: Any, z: Any, tau_grid: Any) -> Any:
    return _result(member_product_grid(sigma_a, sigma_b, z, tau_grid))


def gapped_arc_samples(theta: float, n: Optional[int] = None, rotation: float = 0.0) -> NDArray[np.complex128]:
    """Ordered samples of the unit-circle arc {|arg - rotation| >= theta}, endpoints included."""
    n = get_settings().arc_samples if n is None else n
    phi = np.linspace(theta, TWO_PI - theta, n)
    return np.exp(1j * (phi + rotation))


# ---------------------------------------------------------------------------
# boundaries
# ---------------------------------------------------------------------------

def circle_polyline(center: complex, radius: float, n: int = 400) -> NDArray[np.complex128]:
    t = np.linspace(0.0, TWO_PI, n + 1)
    return center + radius * np.exp(1j * t)


def form_boundary(theta: float, g: float, n: int = 400, rotation: float = 0.0) -> List[NDArray[np.complex128]]:
    """
    The cubic boundary of D(theta) as closed polylines, one per real component,
    rotated to the gap bisector. Empty for theta >= pi/2, where the region is
    B_0(g) u R_g(theta).
    """
    _check_theta_g(theta, g)
    if theta >= np.pi / 2:
        return []
    top = (1.0 + g) * np.cos(theta)
    x = np.linspace(0.0, top, n, endpoint=False)
    y2 = cubic_boundary(theta, g, x)
    valid = y2 >= 0.0
    pieces = []
    # split into runs where the curve is real
    edges = np.flatnonzero(np.diff(np.concatenate([[0], valid.astype(int), [0]])))
    for a, b in zip(edges[::2], edges[1::2]):
        xs, ys = x[a:b], np.sqrt(y2[a:b])
        upper = xs + 1j * ys
        curve = np.concatenate([upper, upper[::-1].conj()])
        pieces.append(curve * np.exp(1j * rotation))
    return pieces


def delta_boundary(theta: float, g: float, reach: float = 2.0, rotation: float = 0.0) -> NDArray[np.complex128]:
    """Polyline of the boundary of Delta_g(theta), clipped at |Re z| <= reach."""
    _check_theta_g(theta, g)
    a, b = g * np.exp(1j * theta), g * np.exp(-1j * theta)
    if theta < np.pi / 2:
        apex = g / np.cos(theta)
        pts = np.array([a, apex, b, a])
    else:
        # lines Re(z e^{-+i theta}) = g leave the vertices away from the origin
        da, db = 1j * np.exp(1j * theta), -1j * np.exp(-1j * theta)
        t = reach / max(abs(da.real), 1e-12)
        pts = np.array([a + t * da, a, b, b + t * db])
    return pts * np.exp(1j * rotation)


def region_boundary(region: RegionDescriptor, n: int = 400) -> List[NDArray[np.complex128]]:
    """Polylines bounding a region, for export."""
    p = region.params
    rot = np.exp(1j * region.rotation)
    if region.variant == RegionVariant.DISC:
        return [circle_polyline(complex(p.get("center_re", 0.0), p.get("center_im", 0.0)), p["radius"], n) * rot]
    if region.variant == RegionVariant.ANNULUS:
        return [circle_polyline(0.0, p["inner"], n), circle_polyline(0.0, p["outer"], n)]
    if region.variant == RegionVariant.FORM:
        lines = form_boundary(p["theta"], p["g"], n, region.rotation)
        if p["theta"] < np.pi / 2:
            x = np.cos(p["theta"])
            lines.append(np.array([x - 1.5j, x + 1.5j]) * rot)
        lines.append(circle_polyline(0.0, p["g"], n))
        return lines
    if region.variant == RegionVariant.TRIANGLE:
        return [delta_boundary(p["theta"], p["g"], rotation=region.rotation), circle_polyline(0.0, p["g"], n)]
    if region.variant == RegionVariant.HALF_PLANE:
        x = p["gamma"] * np.cos(p["theta"])
        return [np.array([x - 1.5j, x + 1.5j]) * rot]
    if region.variant == RegionVariant.GAMMA:
        return [
            circle_polyline(-p["rho"] * np.exp(1j * p["theta"]), p["rho"] + p["rho2"], n) * rot,
            circle_polyline(-p["rho"] * np.exp(-1j * p["theta"]), p["rho"] + p["rho2"], n) * rot,
            circle_polyline(0.0, p["rho2"], n),
        ]
    return []


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def region_contains(region: RegionDescriptor, z: Any) -> Any:
    """Membership of z in a region descriptor."""
    p = region.params
    w = _z(z) * np.exp(-1j * region.rotation)
    v = region.variant
    if v == RegionVariant.DISC:
        return member_disc(w, p["radius"], complex(p.get("center_re", 0.0), p.get("center_im", 0.0)))
    if v == RegionVariant.ANNULUS:
        return member_annulus(w, p["inner"], p["outer"])
    if v == RegionVariant.HALF_PLANE:
        return member_halfplane(w, p["gamma"], p["theta"])
    if v == RegionVariant.FORM:
        return member_form(p["theta"], p["g"], w)
    if v == RegionVariant.TRIANGLE:
        return member_delta(p["theta"], p["g"], w)
    if v == RegionVariant.GAMMA:
        return member_gamma(p["rho"], p["rho2"], p["theta"], w)
    if v == RegionVariant.PRODUCT:
        tau = np.geomspace(p.get("tau_min", 1e-6), p.get("tau_max", 1e4), int(p.get("n_tau", 10_000)))
        return member_product(region.sigma_a, region.sigma_b, w, np.concatenate([[0.0], tau]))
    raise ConfigError(f"unknown region variant {v}")


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def _merge_arcs(arcs: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Merge overlapping arcs given as (start, end) with start in [-pi, pi)."""
    if not arcs:
        return []
    arcs = sorted(((np.mod(s + np.pi, TWO_PI) - np.pi, np.mod(s + np.pi, TWO_PI) - np.pi + (e - s)) for s, e in arcs))
    merged = [list(arcs[0])]
    for s, e in arcs[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    # arcs running past +pi may swallow the first ones
    while len(merged) > 1 and merged[-1][1] - TWO_PI >= merged[0][0]:
        first = merged.pop(0)
        merged[-1][1] = max(merged[-1][1], first[1] + TWO_PI)
    return [(float(s), float(e)) for s, e in merged]


def gap_arcs(emb: UnitaryEmbedding, epsilon: float, xgrid: Optional[Sequence[float]] = None) -> List[GapArc]:
    """
    Gaps of sigma(V) e^{i[-eps, eps]} as (half-width, bisector) pairs.

    An empty list means the smeared spectrum covers the unit circle.
    """
    if epsilon < 0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    arcs = v_symbol_arcs(emb, xgrid)
    if len(arcs) == 1 and arcs[0][1] - arcs[0][0] >= TWO_PI - 1e-12:
        return []
    smeared = _merge_arcs([(s - epsilon, e + epsilon) for s, e in arcs])
    if len(smeared) == 1 and smeared[0][1] - smeared[0][0] >= TWO_PI:
        return []
    gaps = []
    for i, (_, end) in enumerate(smeared):
        nxt = smeared[(i + 1) % len(smeared)][0]
        if i + 1 == len(smeared):
            nxt += TWO_PI
        half = 0.5 * (nxt - end)
        if half <= 0:
            continue
        bisector = float(np.mod(end + half + np.pi, TWO_PI) - np.pi)
        gaps.append(GapArc(theta=float(min(half, np.pi - 1e-12)), rotation=bisector))
    return gaps


def certified_resolvent(
    emb: UnitaryEmbedding,
    epsilon: float,
    blockdata: Optional[TridiagonalBlockData] = None,
    xgrid: Optional[Sequence[float]] = None,
) -> Certificate:
    """
    Composite certificate for T with phases supported in [-eps, eps].

    Collects the disc B_0(g), the annulus r(V) < |z| < 1 when the annulus
    condition holds, and one rotated form region per gap of the smeared
    sigma(V). Also evaluates the split predicate for every gap.
    """
    g = emb.g
    unitary = g >= 1.0 - get_settings().unitary_g_cutoff
    if blockdata is None and not unitary:
        blockdata = tridiag_blocks(emb)

    regions: List[RegionDescriptor] = []
    if g > 0.0:
        regions.append(
            RegionDescriptor(
                variant=RegionVariant.DISC,
                params={"radius": g},
                label="B0(g)",
                activation=f"|z| < g = {g:.12g}",
            )
        )

    if blockdata is not None and blockdata.gap_ok and blockdata.r_v < 1.0:
        regions.append(
            RegionDescriptor(
                variant=RegionVariant.ANNULUS,
                params={"inner": blockdata.r_v, "outer": 1.0},
                label="annulus",
                activation=(
                    f"|V11| = {blockdata.norms['11']:.6g} < 1 and "
                    f"g < (1 - |V11|) / (|V21||V12| + |V22|(1 - |V11|))"
                ),
            )
        )

    gaps = gap_arcs(emb, epsilon, xgrid) if epsilon < np.pi else []
    margins: List[float] = []
    n_split = 0
    for gap in gaps:
        ok, margin = split_predicate(gap.theta, g) if 0.0 < g < 1.0 else (False, float("nan"))
        margins.append(margin)
        n_split += int(ok)
        if 0.0 < g < 1.0:
            regions.append(
                RegionDescriptor(
                    variant=RegionVariant.FORM,
                    params={"theta": gap.theta, "g": g},
                    rotation=gap.rotation,
                    label=f"form@{gap.rotation:.6f}",
                    activation=f"arc of half-width {gap.theta:.12g} around {gap.rotation:.12g} in rho(V_omega)",
                )
            )

    cert = Certificate(
        regions=regions,
        gaps=gaps,
        g=g,
        epsilon=epsilon,
        r_v=blockdata.r_v if blockdata is not None else None,
        gap_ok=blockdata.gap_ok if blockdata is not None else None,
        splits=(n_split >= 2) if gaps else False,
        split_margins=margins,
    )
    logger.info(f"Certificate: {len(regions)} regions, {len(gaps)} gaps, splits={cert.splits}")
    return cert


def certificate_summary(cert: Certificate) -> Dict[str, Any]:
    """JSON-ready listing of the regions and the inequalities that activated them."""
    return {
        "g": cert.g,
        "epsilon": cert.epsilon,
        "r_v": cert.r_v,
        "gap_ok": cert.gap_ok,
        "splits": cert.splits,
        "split_margins": cert.split_margins,
        "gaps": [gap.model_dump() for gap in cert.gaps],
        "regions": [
            {
                "variant": r.variant.value,
                "params": r.params,
                "rotation": r.rotation,
                "label": r.label,
                "activation": r.activation,
            }
            for r in cert.regions
        ],
    }
