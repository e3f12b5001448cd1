"""
Self-test battery: each check reproduces one verifiable property of the band
operators, the certified regions or the walk and reports a metric against its
threshold. Checks run concurrently in worker threads.
"""

import asyncio
import logging
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment

from core.bandop import (
    alpha_delta_zero_spectrum,
    beta_gamma_zero_spectrum,
    build_polar,
    build_T,
    build_Ttilde,
    compression_norms,
    periodic_phases,
    realize_phases,
    tridiag_blocks,
    v11_norm_closed_form,
)
from core.coin import embed, family_drift, family_g0, random_contraction
from core.config import Settings, get_settings
from core.errors import CmvBandError, ConfigError
from core.models import (
    AcceptanceResult,
    BoundaryCondition,
    FamilyParams,
    GraphKind,
    PhaseDistribution,
    PhaseField,
    UnitaryEmbedding,
)
from core.regions import (
    certified_resolvent,
    cubic_boundary,
    gapped_arc_samples,
    member_delta,
    member_form,
    member_form_alpha,
    member_product_grid,
    x_of_tau,
)
from core.spectra import eigvals, sigma_min_many
from core.symbol import (
    annulus_hausdorff,
    bloch_periodic,
    ellipse_points,
    ergodic_hull,
    hull_words,
    swept_ellipse_annulus,
    ti_spectrum,
    vjj_symbol,
)
from core.walk import autocorrelation_decay, dilation_check, escape_check

logger = logging.getLogger(__name__)

# drift family (xi, eta) with a valid annulus, r(V) close to 0.79267
DRIFT_ANNULUS = (np.pi / 12, np.pi / 3)
# drift family (xi, eta, eps) whose smeared gaps satisfy the split predicate
DRIFT_SPLIT = (0.26, 1.05, 0.1)

# open truncations of the |alpha| = |delta| = 1/2 model at M = 256 reach sigma_min
# about 2.5e-3 at |z| = 0.3, 2.3e-2 at 0.8 and 7.5e-2 at 0.9; the envelope is four
# times that, log-linear in between
FZ_RADIUS = 0.9
FZ_ENVELOPE = ((0.0, 1e-2), (0.3, 1e-2), (0.8, 1e-1), (0.9, 3e-1))


def fz_envelope(radius: Any) -> NDArray[np.float64]:
    """Pseudospectral level that certifies |z| = radius as covered by the truncation."""
    r, eps = np.array(FZ_ENVELOPE).T
    return np.exp(np.interp(np.asarray(radius, dtype=np.float64), r, np.log(eps)))


class AcceptanceSizes(BaseModel):
    """Problem sizes for the battery; `quick()` shrinks everything for CI."""
    polar_cases: int = Field(200, description="Random (embedding, seed) pairs")
    polar_m_range: Tuple[int, int] = (8, 128)
    norms_m: int = 256
    nicexp_cases: int = 500
    disc_embeddings: int = 20
    disc_words: int = 500
    disc_x: int = 512
    annulus_words: int = 500
    annulus_x: int = 512
    annulus_m: int = 256
    annulus_z: int = 1000
    anchor_cases: int = 100
    oracle_z: int = 10_000
    oracle_tau: int = 10_000
    inclusion_z: int = 100_000
    split_points: int = 1000
    hull_x: int = 2048
    fz_m: int = Field(256, description="Truncation size FZ_ENVELOPE was measured at")
    fz_points: int = 200
    doubling_m: int = 64
    doubling_cases: int = 50
    walk_depth: int = 12
    walk_side: int = 25
    walk_n: int = 10
    walk_cases: int = 50

    @classmethod
    def quick(cls) -> "AcceptanceSizes":
        return cls(
            polar_cases=20,
            polar_m_range=(8, 32),
            norms_m=64,
            nicexp_cases=50,
            disc_embeddings=4,
            disc_words=60,
            disc_x=128,
            annulus_words=60,
            annulus_x=256,
            annulus_m=64,
            annulus_z=100,
            anchor_cases=20,
            oracle_z=1000,
            oracle_tau=4000,
            inclusion_z=10_000,
            split_points=200,
            hull_x=512,
            fz_points=50,
            doubling_m=16,
            doubling_cases=5,
            walk_depth=7,
            walk_side=15,
            walk_n=5,
            walk_cases=3,
        )


def _result(name: str, metric: float, threshold: float, passed: bool, **details) -> AcceptanceResult:
    return AcceptanceResult(name=name, passed=bool(passed), metric=float(metric), threshold=float(threshold), details=details)


def _random_embedding(rng: np.random.Generator, g_range: Optional[Tuple[float, float]] = None) -> UnitaryEmbedding:
    while True:
        emb = embed(random_contraction(int(rng.integers(2**32))))
        if g_range is None or g_range[0] <= emb.g <= g_range[1]:
            return emb


def _matched_distance(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> float:
    """Largest distance in the optimal one-to-one matching of two equal-size point sets."""
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if rows.size else 0.0


def _words(rng: np.random.Generator, count: int, phases: PhaseField) -> List[List[float]]:
    # lengths 2, 4, 8 carry n, 2n and 3n words
    per_length = max(count // 6, 1)
    words = hull_words([2, 4, 8], per_length, phases, int(rng.integers(2**32)))
    return [w for batch in words.values() for w in batch]


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_polar(sizes: AcceptanceSizes, seed: int = 1) -> AcceptanceResult:
    """T = VK with V unitary and K = P1 + g P2 on random coins and phases."""
    rng = np.random.default_rng(seed)
    worst_res = worst_unit = worst_k = 0.0
    for _ in range(sizes.polar_cases):
        emb = _random_embedding(rng)
        M = int(rng.integers(sizes.polar_m_range[0], sizes.polar_m_range[1] + 1))
        phases = realize_phases(PhaseDistribution.UNIFORM, float(rng.uniform(0, np.pi)), int(rng.integers(2**32)), M)
        polar = build_polar(emb, phases, M)
        v = polar.V.data
        worst_res = max(worst_res, polar.residual)
        worst_unit = max(worst_unit, float(np.linalg.norm(v.conj().T @ v - np.eye(2 * M), 2)))
        expected = np.sort(np.concatenate([np.full(M, emb.g), np.ones(M)]))
        worst_k = max(worst_k, float(np.max(np.abs(np.linalg.eigvalsh(polar.K.data) - expected))))
    metric = max(worst_res, worst_unit)
    passed = worst_res < 1e-12 and worst_unit < 1e-12 and worst_k <= 1e-10
    return _result("polar", metric, 1e-12, passed, residual=worst_res, unitarity=worst_unit, k_spectrum=worst_k)


def check_norms(sizes: AcceptanceSizes, seed: int = 2) -> AcceptanceResult:
    """Closed-form compression norms for the drift family and for |V11| in general."""
    worst_closed = worst_trunc = 0.0
    for xi, eta in ((np.pi / 3, np.pi / 12), (0.5, 1.05), (0.2, 0.7), (1.1, 0.3)):
        emb = family_drift(FamilyParams(xi=xi, eta=eta))
        expected = {"11": np.cos(eta), "12": np.sin(eta), "21": np.sin(eta), "22": np.cos(eta)}
        blocks = tridiag_blocks(emb)
        polar = build_polar(emb, realize_phases(PhaseDistribution.TORUS, 0.0, seed, sizes.norms_m), sizes.norms_m)
        trunc = compression_norms(polar)
        for key, value in expected.items():
            worst_closed = max(worst_closed, abs(blocks.norms[key] - value))
            worst_trunc = max(worst_trunc, abs(trunc[key] - value))

    rng = np.random.default_rng(seed)
    worst_v11 = 0.0
    for _ in range(sizes.nicexp_cases):
        emb = _random_embedding(rng, (0.0, 0.99))
        worst_v11 = max(worst_v11, abs(v11_norm_closed_form(emb) - tridiag_blocks(emb).norms["11"]))
    passed = worst_closed <= 1e-12 and worst_trunc <= 1e-3 and worst_v11 <= 1e-12
    return _result("norms", max(worst_closed, worst_v11), 1e-12, passed, truncation=worst_trunc)


def check_disc(sizes: AcceptanceSizes, seed: int = 3) -> AcceptanceResult:
    """Periodic-word eigenvalues never enter B_0(g)."""
    rng = np.random.default_rng(seed)
    x = 2.0 * np.pi * np.arange(sizes.disc_x) / sizes.disc_x - np.pi
    torus = PhaseField(distribution=PhaseDistribution.TORUS)
    worst = np.inf
    for _ in range(sizes.disc_embeddings):
        emb = _random_embedding(rng, (0.05, 0.95))
        for word in _words(rng, sizes.disc_words, torus):
            spec = bloch_periodic(emb, word, x)
            worst = min(worst, spec.min_modulus - emb.g)
    return _result("disc", worst, -1e-9, worst >= -1e-9)


def bloch_modulus_bound(emb: UnitaryEmbedding, words: List[List[float]], x: NDArray[np.float64]) -> float:
    """Largest Bloch eigenvalue modulus over a set of periodic phase words."""
    if not words:
        raise ConfigError("at least one phase word is required")
    return max(bloch_periodic(emb, w, x).max_modulus for w in words)


def check_annulus(sizes: AcceptanceSizes, seed: int = 4) -> AcceptanceResult:
    """Drift coin at (pi/3, pi/12): word spectra stay inside B_0(r(V)) and T - z is invertible on the annulus."""
    emb = family_drift(FamilyParams(xi=DRIFT_ANNULUS[0], eta=DRIFT_ANNULUS[1]))
    blocks = tridiag_blocks(emb)
    rng = np.random.default_rng(seed)
    x = 2.0 * np.pi * np.arange(sizes.annulus_x) / sizes.annulus_x - np.pi
    torus = PhaseField(distribution=PhaseDistribution.TORUS)
    top = bloch_modulus_bound(emb, _words(rng, sizes.annulus_words, torus), x)

    M = sizes.annulus_m
    t_mat = build_T(emb, realize_phases(PhaseDistribution.TORUS, 0.0, seed, M), M)
    # interior samples keep a fixed distance from both boundary circles
    radii = rng.uniform(blocks.r_v + 0.05, 0.95, sizes.annulus_z)
    zs = radii * np.exp(1j * rng.uniform(-np.pi, np.pi, sizes.annulus_z))
    smin = float(sigma_min_many(t_mat, zs).min())
    passed = blocks.gap_ok and top <= blocks.r_v + 1e-9 and smin > 0.01
    return _result("annulus", top - blocks.r_v, 1e-9, passed, r_v=blocks.r_v, sigma_min=smin)


def check_regions(sizes: AcceptanceSizes, seed: int = 5) -> AcceptanceResult:
    """Cubic anchors, the tau-grid oracle for the form region and the region inclusions."""
    rng = np.random.default_rng(seed)
    worst_anchor = 0.0
    for _ in range(sizes.anchor_cases):
        theta = float(rng.uniform(0.05, np.pi / 2 - 0.05))
        g = float(rng.uniform(0.05, 0.95))
        c = np.cos(theta)
        for tau, point in (
            (1.0 / (2.0 * c), 0.0),
            ((1.0 + g) / (2.0 * c), g * np.exp(1j * theta)),
            ((1.0 + g) / (2.0 * g * c), np.exp(1j * theta)),
        ):
            x = float(x_of_tau(theta, g, tau))
            worst_anchor = max(worst_anchor, abs(x - point.real))
            worst_anchor = max(worst_anchor, abs(cubic_boundary(theta, g, point.real) - point.imag ** 2))

    theta, g = np.pi / 3, 0.4
    zs = rng.uniform(-1.5, 1.5, sizes.oracle_z) + 1j * rng.uniform(-1.5, 1.5, sizes.oracle_z)
    tau = np.geomspace(1e-4, 1e4, sizes.oracle_tau)
    exact = member_form(theta, g, zs)
    oracle = member_product_grid(gapped_arc_samples(theta), [1.0, g], zs, tau)
    ring = 1e-3 * np.exp(2j * np.pi * np.arange(8) / 8)
    near_boundary = np.zeros(zs.shape, dtype=bool)
    for w in ring:
        near_boundary |= member_form(theta, g, zs + w) != exact
    disagreements = int(np.sum((exact != oracle) & ~near_boundary))

    # inclusions hold for 0 < alpha < theta < pi/2; z ranges over the closed unit disc
    violations = 0
    for _ in range(10):
        theta = float(rng.uniform(0.05, np.pi / 2 - 0.05))
        g = float(rng.uniform(0.05, 0.95))
        alpha = float(rng.uniform(0.01, 0.99)) * theta
        n = sizes.inclusion_z // 10
        z = np.sqrt(rng.uniform(0, 1, n)) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
        form = member_form(theta, g, z)
        violations += int(np.sum(member_delta(theta, g, z) & ~form))
        violations += int(np.sum(member_form_alpha(theta, g, alpha, z) & ~form))

    passed = worst_anchor <= 1e-12 and disagreements <= 1e-3 * sizes.oracle_z and violations == 0
    return _result(
        "regions", worst_anchor, 1e-12, passed,
        oracle_disagreements=disagreements, inclusion_violations=violations,
    )


def check_split(sizes: AcceptanceSizes, seed: int = 6) -> AcceptanceResult:
    """A splitting certificate covers [0, 1] and no admissible word eigenvalue lies inside it."""
    xi, eta, eps = DRIFT_SPLIT
    emb = family_drift(FamilyParams(xi=xi, eta=eta))
    cert = certified_resolvent(emb, eps)
    segment = np.linspace(1e-9, 1.0 - 1e-9, sizes.split_points).astype(np.complex128)
    covered = float(np.mean(cert.contains(segment)))

    rng = np.random.default_rng(seed)
    support = PhaseField(distribution=PhaseDistribution.UNIFORM, epsilon=eps)
    x = 2.0 * np.pi * np.arange(256) / 256 - np.pi
    ring = 1e-9 * np.exp(2j * np.pi * np.arange(8) / 8)
    inside = 0
    for word in _words(rng, 60, support):
        pts = bloch_periodic(emb, word, x).points()
        deep = np.asarray(cert.contains(pts), dtype=bool)
        for w in ring:
            deep &= np.asarray(cert.contains(pts + w), dtype=bool)
        inside += int(deep.sum())
    passed = cert.splits and covered == 1.0 and inside == 0
    return _result("split", 1.0 - covered, 0.0, passed, eigenvalues_inside=inside, margins=cert.split_margins)


def check_hull_g0(sizes: AcceptanceSizes, seed: int = 7) -> AcceptanceResult:
    """g = 0: the torus hull is the annulus swept by the V11 ellipse, and finite truncations fill the disc."""
    emb = family_g0(FamilyParams(xi=0.3, eta=0.7))
    x = 2.0 * np.pi * np.arange(sizes.hull_x) / sizes.hull_x - np.pi
    hull = ergodic_hull(emb, lmax=8, words_per_l=20, xgrid=x, seed=seed)
    r_in, r_out = hull.annulus
    ellipse = vjj_symbol(emb, 1)
    rot = np.exp(2j * np.pi * np.arange(512) / 512)
    swept = (rot[:, None] * ellipse_points(ellipse, x)[None, :]).ravel()
    distance = annulus_hausdorff(swept, r_in, r_out)
    e_in, e_out = swept_ellipse_annulus(ellipse)

    mods = np.abs(hull.points)
    outside = (mods > 1e-9) & ((mods < e_in - 1e-9) | (mods > e_out + 1e-9))

    fz = family_g0(FamilyParams(xi=np.pi / 4, eta=np.pi / 4))
    rng = np.random.default_rng(seed)
    M = sizes.fz_m
    t_open = build_T(fz, realize_phases(PhaseDistribution.TORUS, 0.0, seed, M), M, BoundaryCondition.OPEN)
    radii = FZ_RADIUS * np.sqrt(rng.uniform(0, 1, sizes.fz_points))
    zs = radii * np.exp(1j * rng.uniform(-np.pi, np.pi, sizes.fz_points))
    smin = sigma_min_many(t_open, zs)
    fz_ratio = float(np.max(smin / fz_envelope(radii)))
    fz_flat = float(np.mean(smin <= 1e-2))

    passed = distance <= 1e-2 and not outside.any() and fz_ratio <= 1.0
    return _result(
        "hull_g0", distance, 1e-2, passed,
        annulus=[r_in, r_out], ellipse_annulus=[e_in, e_out],
        outside=int(outside.sum()), fz_sigma_min=float(smin.max()),
        fz_envelope_ratio=fz_ratio, fz_covered_at_1e_2=fz_flat,
    )


def check_doubling(sizes: AcceptanceSizes, seed: int = 8) -> AcceptanceResult:
    """The doubled operator carries the spectrum of T^2 with half the multiplicity."""
    rng = np.random.default_rng(seed)
    M = sizes.doubling_m
    worst = 0.0
    for _ in range(sizes.doubling_cases):
        emb = _random_embedding(rng, (0.1, 0.9))
        phases = realize_phases(PhaseDistribution.TORUS, 0.0, int(rng.integers(2**32)), M)
        t_mat = build_T(emb, phases, M)
        squared = eigvals(t_mat.data @ t_mat.data).eigenvalues
        doubled = eigvals(build_Ttilde(emb, phases, M)).eigenvalues
        worst = max(worst, _matched_distance(squared, np.concatenate([doubled, doubled])))
    return _result("doubling", worst, 1e-10, worst <= 1e-10)


def check_walk(sizes: AcceptanceSizes, seed: int = 9) -> AcceptanceResult:
    """Dilation, escape and autocorrelation decay on the tree and the lattice."""
    rng = np.random.default_rng(seed)
    emb = family_drift(FamilyParams(xi=DRIFT_ANNULUS[0], eta=DRIFT_ANNULUS[1]))
    n, depth = sizes.walk_n, sizes.walk_depth
    deviation = escape = 0.0
    decay_ok = True
    for k in range(sizes.walk_cases):
        coin = emb if k == 0 else _random_embedding(rng)
        phases = PhaseField(distribution=PhaseDistribution.TORUS, seed=int(rng.integers(2**32)))
        for kind, extra in ((GraphKind.TREE, {}), (GraphKind.LATTICE, {"side": sizes.walk_side})):
            deviation = max(deviation, dilation_check(coin, phases, n, depth, kind, **extra))
            escape = max(escape, escape_check(coin, phases, n, depth, kind, **extra))
        if k == 0:
            report = autocorrelation_decay(emb, phases, n, depth)
            decay_ok = bool(report.certified and report.passed)
    passed = deviation < 1e-12 and escape < 1e-12 and decay_ok
    return _result("walk", deviation, 1e-12, passed, escape=escape, decay=decay_ok)


def check_special(sizes: AcceptanceSizes, seed: int = 10) -> AcceptanceResult:
    """Closed-form spectra for alpha = delta = 0 and beta = gamma = 0."""
    g, psi = 0.4, 0.7
    emb = embed([[0.0, g], [np.exp(1j * psi), 0.0]])
    worst = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(10):
        phases = periodic_phases(list(rng.uniform(-np.pi, np.pi, 4)), 2)
        numeric = eigvals(build_T(emb, phases, 2)).eigenvalues
        worst = max(worst, _matched_distance(numeric, alpha_delta_zero_spectrum(emb, phases, 2)))

    diag = embed([[np.exp(0.3j), 0.0], [0.0, g * np.exp(-1.1j)]])
    r_small, r_large = beta_gamma_zero_spectrum(diag)
    mods = np.abs(ti_spectrum(diag).points())
    circle_err = float(np.min(np.abs(mods[:, None] - np.array([r_small, r_large])[None, :]), axis=1).max())
    radii_err = abs(r_small - g) + abs(r_large - 1.0)
    metric = max(worst, circle_err, radii_err)
    return _result("special", metric, 1e-12, metric <= 1e-12, alpha_delta_zero=worst, beta_gamma_zero=circle_err)


CHECKS: Dict[str, Callable[[AcceptanceSizes], AcceptanceResult]] = {
    "polar": check_polar,
    "norms": check_norms,
    "disc": check_disc,
    "annulus": check_annulus,
    "regions": check_regions,
    "split": check_split,
    "hull_g0": check_hull_g0,
    "doubling": check_doubling,
    "walk": check_walk,
    "special": check_special,
}


def run_check(name: str, sizes: AcceptanceSizes) -> AcceptanceResult:
    """Run one check; library errors become a failed result instead of aborting the battery."""
    start = time.perf_counter()
    try:
        result = CHECKS[name](sizes)
    except CmvBandError as e:
        logger.error(f"Check {name} raised: {e}")
        result = _result(name, float("nan"), float("nan"), False, error=str(e))
    result.elapsed = time.perf_counter() - start
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, f"{name}: {'PASS' if result.passed else 'FAIL'} metric={result.metric:.3e} ({result.elapsed:.1f}s)")
    return result


async def run_acceptance(
    quick: bool = False,
    names: Optional[List[str]] = None,
    settings: Optional[Settings] = None,
) -> List[AcceptanceResult]:
    """Run the selected checks concurrently; results come back in battery order."""
    sizes = AcceptanceSizes.quick() if quick else AcceptanceSizes()
    selected = list(CHECKS) if names is None else names
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {unknown}")
    semaphore = asyncio.Semaphore((settings or get_settings()).max_workers)

    async def run(name: str) -> AcceptanceResult:
        async with semaphore:
            return await asyncio.to_thread(run_check, name, sizes)

    return list(await asyncio.gather(*(run(n) for n in selected)))
