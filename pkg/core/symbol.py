"""
Bloch symbols of the band operators and the hulls built from them.

The translation-invariant operator is unitarily equivalent to multiplication by
the 2x2 symbol [[alpha e^{2ix}, beta e^{ix}], [gamma e^{-ix}, delta e^{-2ix}]].
Periodic phase configurations of period l give l x l symbols; a hop leaving a
period to the right picks up e^{ix}, to the left e^{-ix}.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import directed_hausdorff

from core.bandop import tridiag_blocks
from core.config import get_settings
from core.errors import ConfigError
from core.models import (
    EllipseSymbol,
    HullEstimate,
    PeriodicWord,
    PhaseDistribution,
    PhaseField,
    SymbolSpectrum,
    UnitaryEmbedding,
)

logger = logging.getLogger(__name__)

Entries = Tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.complex128]]


def default_grid(n: Optional[int] = None) -> NDArray[np.float64]:
    """Quasimomenta 2 pi k / n, k = 0 .. n-1."""
    n = get_settings().x_samples if n is None else n
    return 2.0 * np.pi * np.arange(n) / n


# ---------------------------------------------------------------------------
# translation-invariant symbol
# ---------------------------------------------------------------------------

def symbol_T(emb: UnitaryEmbedding, x: float) -> NDArray[np.complex128]:
    c = emb.corner()
    return _symbol_of(c, x)


def _symbol_of(c: NDArray[np.complex128], x: float) -> NDArray[np.complex128]:
    e1, e2 = np.exp(1j * x), np.exp(2j * x)
    return np.array(
        [[c[0, 0] * e2, c[0, 1] * e1], [c[1, 0] / e1, c[1, 1] / e2]],
        dtype=np.complex128,
    )


def _roots(c: NDArray[np.complex128], x: Union[float, NDArray[np.float64]]) -> NDArray[np.complex128]:
    x = np.asarray(x, dtype=np.float64)
    tr = c[0, 0] * np.exp(2j * x) + c[1, 1] * np.exp(-2j * x)
    det = c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
    disc = np.sqrt(tr * tr - 4.0 * det + 0j)
    plus, minus = 0.5 * (tr + disc), 0.5 * (tr - disc)
    big = np.where(np.abs(plus) >= np.abs(minus), plus, minus)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(np.abs(big) > 0.0, det / big, 0.0)
    return np.stack([big, small], axis=-1)


def lambda_pm(emb: UnitaryEmbedding, x: Union[float, NDArray[np.float64]]) -> NDArray[np.complex128]:
    """
    Roots of l^2 - (alpha e^{2ix} + delta e^{-2ix}) l + (alpha delta - beta gamma).

    The larger root comes from the quadratic formula and the smaller one from
    the product, so both are accurate when det is tiny. Pairs are unordered.

    Returns:
        Array of shape x.shape + (2,)
    """
    return _roots(emb.corner(), x)


def ti_spectrum(emb: UnitaryEmbedding, xgrid: Optional[Sequence[float]] = None) -> SymbolSpectrum:
    """Sampled Ran lambda_+ u Ran lambda_-."""
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    if x.size == 0:
        raise ConfigError("quasimomentum grid is empty")
    return SymbolSpectrum(x=x, eigenvalues=lambda_pm(emb, x), label="T")


# ---------------------------------------------------------------------------
# periodic symbols
# ---------------------------------------------------------------------------

def bloch_symbol(entries: Entries, period: int, x: Union[float, NDArray[np.float64]]) -> NDArray[np.complex128]:
    """
    Bloch symbol of a periodic banded operator.

    Args:
        entries: (rows, cols, values) of one period in infinite index form;
            columns may lie outside [0, period)
        period: Number of indices per period
        x: Quasimomentum or array of quasimomenta

    Returns:
        Array of shape x.shape + (period, period)
    """
    rows, cols, vals = entries
    shift = cols - np.mod(cols, period)
    rows = rows - shift
    cols = cols - shift
    n = np.floor_divide(rows, period)
    rows = np.mod(rows, period)

    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape + (period, period), dtype=np.complex128)
    factors = np.exp(1j * np.multiply.outer(x, n)) * vals
    for k in range(len(vals)):
        out[..., rows[k], cols[k]] += factors[..., k]
    return out


def _word_entries(c: NDArray[np.complex128], phases: Sequence[float]) -> Entries:
    """Entries of one period of T for the given site phases."""
    ell = len(phases)
    theta = np.asarray(phases, dtype=np.float64)
    rows, cols, vals = [], [], []
    for j in range(ell // 2):
        up, down = 2 * j - 1, 2 * j + 2
        e_up = np.exp(1j * theta[up % ell])
        e_down = np.exp(1j * theta[down % ell])
        rows += [up, up, down, down]
        cols += [2 * j, 2 * j + 1, 2 * j, 2 * j + 1]
        vals += [e_up * c[1, 0], e_up * c[1, 1], e_down * c[0, 0], e_down * c[0, 1]]
    return np.array(rows), np.array(cols), np.array(vals, dtype=np.complex128)


def _as_word(word: Union[PeriodicWord, Sequence[float]]) -> PeriodicWord:
    if isinstance(word, PeriodicWord):
        return word
    phases = list(word)
    if len(phases) < 2 or len(phases) % 2:
        raise ConfigError(f"period length must be even and at least 2, got {len(phases)}")
    return PeriodicWord(phases=phases)


def bloch_periodic(
    emb: UnitaryEmbedding,
    word: Union[PeriodicWord, Sequence[float]],
    xgrid: Optional[Sequence[float]] = None,
    support: Optional[PhaseField] = None,
) -> SymbolSpectrum:
    """
    Eigenvalues of the l x l symbol of T with period-l phases.

    Raises:
        ConfigError: For odd l, or phases outside the support of `support`
    """
    word = _as_word(word)
    if support is not None and not support.in_support(word.phases):
        raise ConfigError("word phases lie outside the phase support")
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    sym = bloch_symbol(_word_entries(emb.corner(), word.phases), word.length, x)
    return SymbolSpectrum(x=x, eigenvalues=np.linalg.eigvals(sym), label=f"T[l={word.length}]")


def ttilde_symbol(
    emb: UnitaryEmbedding,
    word: Union[PeriodicWord, Sequence[float]],
    x: Union[float, NDArray[np.float64]],
) -> NDArray[np.complex128]:
    """
    Bloch symbol of the doubled operator for a site-phase word of length L
    (a multiple of 4), as the product of the symbols of its two block factors.

    Returns:
        Array of shape x.shape + (L/2, L/2)
    """
    word = _as_word(word)
    if word.length % 4:
        raise ConfigError(f"the doubled symbol needs a word length divisible by 4, got {word.length}")
    theta = np.asarray(word.phases, dtype=np.float64)
    big = word.length
    period = big // 2
    alpha, beta, gamma, delta = emb.alpha, emb.beta, emb.gamma, emb.delta

    def ph(site: int) -> complex:
        return np.exp(1j * theta[site % big])

    even_r, even_c, even_v = [], [], []
    odd_r, odd_c, odd_v = [], [], []
    for k in range(period // 2):
        a, b = 2 * k, 2 * k + 1
        top, bottom = ph(4 * k - 1), ph(4 * k + 2)
        even_r += [a, a, b, b]
        even_c += [a, b, a, b]
        even_v += [top * gamma, top * delta, bottom * alpha, bottom * beta]

        a, b = 2 * k + 1, 2 * k + 2
        top, bottom = ph(4 * k + 1), ph(4 * k + 4)
        odd_r += [a, a, b, b]
        odd_c += [a, b, a, b]
        odd_v += [top * gamma, top * delta, bottom * alpha, bottom * beta]

    s_even = bloch_symbol((np.array(even_r), np.array(even_c), np.array(even_v)), period, x)
    s_odd = bloch_symbol((np.array(odd_r), np.array(odd_c), np.array(odd_v)), period, x)
    return s_odd @ s_even


# ---------------------------------------------------------------------------
# sigma(V)
# ---------------------------------------------------------------------------

def v_symbol_spectrum(emb: UnitaryEmbedding, xgrid: Optional[Sequence[float]] = None) -> SymbolSpectrum:
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    return SymbolSpectrum(x=x, eigenvalues=_roots(emb.v_coin(), x), label="V")


def _refine_edge(c: NDArray[np.complex128], x0: float, dx: float, ref: float, sign: float) -> float:
    """Extreme angle (sign=+1: largest, -1: smallest) of the symbol branch near ref on [x0-dx, x0+dx]."""

    def offset(x: float) -> float:
        lam = _roots(c, x)
        d = np.angle(lam * np.exp(-1j * ref))
        return -sign * float(d[np.argmin(np.abs(d))])

    res = minimize_scalar(offset, bounds=(x0 - dx, x0 + dx), method="bounded", options={"xatol": 1e-13})
    # never move the edge inwards past the sampled value
    moved = max(-float(res.fun), 0.0)
    return ref + sign * moved


def v_symbol_arcs(
    emb: UnitaryEmbedding,
    xgrid: Optional[Sequence[float]] = None,
    refine: bool = True,
) -> List[Tuple[float, float]]:
    """
    Arcs of sigma(V) as (start, end) angles with start < end <= start + 2 pi.

    Arc edges are located on the grid and then refined with a bounded scalar
    search on the symbol branch. Returns [(-pi, pi)] when sigma(V) is the
    whole circle.
    """
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    c = emb.v_coin()
    lam = _roots(c, x)
    ang = np.angle(lam).ravel()
    xs = np.repeat(x, 2)
    order = np.argsort(ang)
    ang, xs = ang[order], xs[order]

    dx = 2.0 * np.pi / len(x)
    threshold = 6.0 * dx
    steps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
    gaps = np.nonzero(steps > threshold)[0]
    if gaps.size == 0:
        return [(-np.pi, np.pi)]

    arcs = []
    for i, g in enumerate(gaps):
        nxt = gaps[(i + 1) % len(gaps)]
        start_idx = (g + 1) % len(ang)
        start, end = float(ang[start_idx]), float(ang[nxt])
        if refine:
            start = _refine_edge(c, float(xs[start_idx]), dx, start, -1.0)
            end = _refine_edge(c, float(xs[nxt]), dx, end, 1.0)
        if end < start:
            end += 2.0 * np.pi
        arcs.append((start, end))
    arcs.sort()
    logger.debug(f"sigma(V) arcs: {arcs}")
    return arcs


# ---------------------------------------------------------------------------
# diagonal compressions
# ---------------------------------------------------------------------------

def vjj_symbol(emb: UnitaryEmbedding, j: int) -> EllipseSymbol:
    """
    Scalar symbol e^{ix} w_+ + e^{-ix} w_- of P_j V P_j and its image ellipse.

    Raises:
        ConfigError: If j is not 1 or 2, or g = 1
    """
    if j not in (1, 2):
        raise ConfigError(f"block index must be 1 or 2, got {j}")
    blocks = tridiag_blocks(emb)
    key = f"{j}{j}"
    wp, wm = complex(blocks.w_plus[key]), complex(blocks.w_minus[key])
    return EllipseSymbol(
        block=key,
        w_plus=wp,
        w_minus=wm,
        semi_major=abs(wp) + abs(wm),
        semi_minor=abs(abs(wp) - abs(wm)),
        rotation=0.5 * (np.angle(wp) + np.angle(wm)),
    )


def ellipse_points(ellipse: EllipseSymbol, xgrid: Optional[Sequence[float]] = None) -> NDArray[np.complex128]:
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    return np.exp(1j * x) * ellipse.w_plus + np.exp(-1j * x) * ellipse.w_minus


def swept_ellipse_annulus(ellipse: EllipseSymbol) -> Tuple[float, float]:
    """Radii of the annulus swept by the ellipse under all rotations."""
    return ellipse.semi_minor, ellipse.semi_major


# ---------------------------------------------------------------------------
# hulls
# ---------------------------------------------------------------------------

def _draw_word(rng: np.random.Generator, phases: PhaseField, ell: int) -> List[float]:
    if phases.distribution == PhaseDistribution.POINT:
        return [phases.theta0] * ell
    if phases.distribution == PhaseDistribution.TORUS:
        return rng.uniform(-np.pi, np.pi, size=ell).tolist()
    if phases.distribution == PhaseDistribution.WORD:
        base = phases.word or [0.0]
        return [base[k % len(base)] for k in range(ell)]
    if phases.epsilon == 0.0:
        return [0.0] * ell
    return rng.uniform(-phases.epsilon, phases.epsilon, size=ell).tolist()


def hull_words(
    lengths: Iterable[int],
    words_per_l: int,
    phases: PhaseField,
    seed: int,
) -> Dict[int, List[List[float]]]:
    """
    Nested word sets. Every word of length l appears doubled among the words
    of length 2l, next to `words_per_l` fresh draws of length 2l, so on grids
    2 pi k / n the hulls grow with l.
    """
    rng = np.random.default_rng(seed)
    deterministic = phases.distribution in (PhaseDistribution.POINT, PhaseDistribution.WORD) or (
        phases.distribution == PhaseDistribution.UNIFORM and phases.epsilon == 0.0
    )
    words: Dict[int, List[List[float]]] = {}
    for ell in sorted(set(lengths)):
        if ell < 2 or ell % 2:
            raise ConfigError(f"period lengths must be even, got {ell}")
        doubled = [w + w for w in words.get(ell // 2, [])]
        if deterministic:
            words[ell] = doubled or [_draw_word(rng, phases, ell)]
            continue
        fresh = [_draw_word(rng, phases, ell) for _ in range(words_per_l)]
        words[ell] = doubled + fresh
    return words


def ergodic_hull(
    emb: UnitaryEmbedding,
    lmax: int = 8,
    words_per_l: Optional[int] = None,
    xgrid: Optional[Sequence[float]] = None,
    seed: int = 0,
    phases: Optional[PhaseField] = None,
) -> HullEstimate:
    """
    Union of periodic-approximant spectra for words drawn from the phase support.

    For phases uniform on the torus the analytic sweep of e^{i theta} Ran lambda_pm,
    an annulus, is attached as well. The point cloud is an inner estimate of the
    random spectrum; `exact` is set only where equality is known.
    """
    settings = get_settings()
    words_per_l = settings.words_per_length if words_per_l is None else words_per_l
    x = default_grid() if xgrid is None else np.asarray(xgrid, dtype=np.float64)
    phases = phases or PhaseField(distribution=PhaseDistribution.TORUS)
    lengths = [2 ** k for k in range(1, int(np.log2(max(lmax, 2))) + 1)]
    words = hull_words(lengths, words_per_l, phases, seed)

    c = emb.corner()
    by_length: Dict[int, NDArray[np.complex128]] = {}
    for ell, batch in words.items():
        pts = []
        for word in batch:
            sym = bloch_symbol(_word_entries(c, word), ell, x)
            pts.append(np.linalg.eigvals(sym).ravel())
        by_length[ell] = np.concatenate(pts)
        logger.info(f"Hull l={ell}: {len(batch)} words, {by_length[ell].size} points")

    annulus = None
    contains_origin = False
    if phases.distribution == PhaseDistribution.TORUS:
        mods = np.abs(lambda_pm(emb, x)).ravel()
        if emb.g == 0.0:
            contains_origin = True
            mods = mods[mods > 1e-12]
        annulus = (float(mods.min()), float(mods.max())) if mods.size else (0.0, 0.0)

    exact = phases.distribution == PhaseDistribution.POINT or (
        phases.distribution == PhaseDistribution.TORUS and emb.g == 0.0
    )
    return HullEstimate(
        points=np.concatenate(list(by_length.values())),
        by_length=by_length,
        l_max=max(lengths),
        words_per_length=words_per_l,
        x_samples=len(x),
        distribution=phases.distribution,
        annulus=annulus,
        contains_origin=contains_origin,
        exact=exact,
    )


# ---------------------------------------------------------------------------
# point-cloud distances
# ---------------------------------------------------------------------------

def _planar(z: NDArray[np.complex128]) -> NDArray[np.float64]:
    z = np.asarray(z, dtype=np.complex128).ravel()
    return np.column_stack([z.real, z.imag])


def directed_distance(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> float:
    """sup over a of the distance to b."""
    return float(directed_hausdorff(_planar(a), _planar(b))[0])


def hausdorff(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> float:
    return max(directed_distance(a, b), directed_distance(b, a))


def annulus_hausdorff(
    points: NDArray[np.complex128],
    r_in: float,
    r_out: float,
    n_radial: int = 64,
    n_angular: int = 512,
) -> float:
    """Hausdorff distance between a point cloud and a sampled closed annulus."""
    rr = np.linspace(r_in, r_out, n_radial)
    tt = 2.0 * np.pi * np.arange(n_angular) / n_angular
    grid = np.multiply.outer(rr, np.exp(1j * tt)).ravel()
    mods = np.abs(np.asarray(points).ravel())
    outside = float(np.max(np.maximum(np.maximum(r_in - mods, mods - r_out), 0.0)))
    return max(outside, directed_distance(grid, points))
