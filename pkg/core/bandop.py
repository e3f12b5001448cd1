"""
Finite truncations of the random contraction T = D V K and its relatives.

Sites are grouped in cells (2j, 2j+1). Column 2j of T has its two nonzeros at
rows 2j-1 and 2j+2:

    T[2j-1, 2j] = e^{i w_{2j-1}} gamma    T[2j-1, 2j+1] = e^{i w_{2j-1}} delta
    T[2j+2, 2j] = e^{i w_{2j+2}} alpha    T[2j+2, 2j+1] = e^{i w_{2j+2}} beta

Rows are taken mod 2M for periodic truncations and dropped for open ones; the
phase of an entry is the phase of its (wrapped) row, so T = diag(e^{iw}) T0
holds for both boundary conditions.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from core.config import get_settings
from core.errors import ConfigError, NumericFailure
from core.models import (
    BLOCK_KEYS,
    BandMatrix,
    BoundaryCondition,
    MatrixKind,
    PeriodicWord,
    PhaseDistribution,
    PhaseField,
    PolarParts,
    StructureReport,
    TridiagonalBlockData,
    UnitaryEmbedding,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------

def realize_phases(
    distribution: Union[PhaseDistribution, str],
    epsilon: float,
    seed: int,
    M: int,
    theta0: float = 0.0,
) -> PhaseField:
    """
    Draw i.i.d. phases for the site window -1 .. 2M+2.

    Draws happen in window order from a PCG64 stream seeded with `seed`, so the
    same seed and window always give the same realization.
    """
    distribution = PhaseDistribution(distribution)
    if M < 2:
        raise ConfigError(f"M must be at least 2, got {M}")
    if epsilon < 0:
        raise ConfigError(f"support half-width must be nonnegative, got {epsilon}")
    n = 2 * M + 4
    rng = np.random.default_rng(seed)
    if distribution == PhaseDistribution.POINT:
        realized = np.full(n, float(theta0))
    elif distribution == PhaseDistribution.UNIFORM:
        realized = rng.uniform(-epsilon, epsilon, size=n) if epsilon > 0 else np.zeros(n)
    elif distribution == PhaseDistribution.TORUS:
        realized = rng.uniform(-np.pi, np.pi, size=n)
    else:
        raise ConfigError("word phases are built with periodic_phases")
    return PhaseField(
        distribution=distribution,
        epsilon=epsilon,
        theta0=theta0,
        seed=seed,
        window_start=-1,
        realized=realized,
    )


def periodic_phases(word: Union[PeriodicWord, Sequence[float]], M: int) -> PhaseField:
    """Phase field repeating `word` over the window -1 .. 2M+2; 2M must be a multiple of the word length."""
    if not isinstance(word, PeriodicWord):
        word = PeriodicWord(phases=list(word))
    if (2 * M) % word.length:
        raise ConfigError(f"2M = {2 * M} sites is not a multiple of the period {word.length}")
    sites = np.arange(-1, 2 * M + 3)
    realized = np.asarray(word.phases, dtype=np.float64)[sites % word.length]
    return PhaseField(
        distribution=PhaseDistribution.WORD,
        window_start=-1,
        realized=realized,
        word=list(word.phases),
    )


def zero_phases(M: int) -> PhaseField:
    return realize_phases(PhaseDistribution.POINT, 0.0, 0, M, theta0=0.0)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def assemble(
    coin: NDArray[np.complex128],
    omega: NDArray[np.float64],
    periodic: bool,
) -> NDArray[np.complex128]:
    """
    Dense matrix of the band operator for a 2x2 coin and per-site phases.

    Args:
        coin: [[alpha, beta], [gamma, delta]]
        omega: Phase of each site, length n (even)
        periodic: Wrap rows mod n instead of dropping them

    Returns:
        n x n complex matrix
    """
    n = len(omega)
    alpha, beta = coin[0, 0], coin[0, 1]
    gamma, delta = coin[1, 0], coin[1, 1]
    cols = 2 * np.arange(n // 2)
    up = cols - 1
    down = cols + 2
    if periodic:
        up_mask = np.ones_like(up, dtype=bool)
        down_mask = np.ones_like(down, dtype=bool)
        up = up % n
        down = down % n
    else:
        up_mask = up >= 0
        down_mask = down < n

    mat = np.zeros((n, n), dtype=np.complex128)
    u, cu = up[up_mask], cols[up_mask]
    phase_u = np.exp(1j * omega[u])
    mat[u, cu] = phase_u * gamma
    mat[u, cu + 1] = phase_u * delta
    d, cd = down[down_mask], cols[down_mask]
    phase_d = np.exp(1j * omega[d])
    mat[d, cd] = phase_d * alpha
    mat[d, cd + 1] = phase_d * beta
    return mat


def _site_phases(phases: PhaseField, M: int) -> NDArray[np.float64]:
    try:
        return phases.site_phases(2 * M)
    except IndexError as e:
        raise ConfigError(f"Phase window too small for {2 * M} sites: {e}") from e


def _manifest(emb: UnitaryEmbedding, phases: PhaseField, M: int, bc: BoundaryCondition) -> Dict:
    return {
        "embedding": emb.model_dump(mode="json"),
        "phases": {
            "distribution": phases.distribution.value,
            "epsilon": phases.epsilon,
            "theta0": phases.theta0,
            "seed": phases.seed,
            "word": phases.word,
        },
        "M": M,
        "bc": bc.value,
    }


def _build(
    coin: NDArray[np.complex128],
    emb: UnitaryEmbedding,
    phases: PhaseField,
    M: int,
    bc: Union[BoundaryCondition, str],
    kind: MatrixKind,
) -> BandMatrix:
    bc = BoundaryCondition(bc)
    if M < 2:
        raise ConfigError(f"M must be at least 2, got {M}")
    omega = _site_phases(phases, M)
    data = assemble(coin, omega, periodic=bc == BoundaryCondition.PERIODIC)
    return BandMatrix(data=data, bc=bc, kind=kind, manifest=_manifest(emb, phases, M, bc))


def build_T(
    emb: UnitaryEmbedding,
    phases: PhaseField,
    M: int,
    bc: Union[BoundaryCondition, str] = BoundaryCondition.PERIODIC,
) -> BandMatrix:
    """2M x 2M truncation of T with the given phases."""
    return _build(emb.corner(), emb, phases, M, bc, MatrixKind.T)


def phase_factorization(
    emb: UnitaryEmbedding,
    phases: PhaseField,
    M: int,
    bc: Union[BoundaryCondition, str] = BoundaryCondition.PERIODIC,
) -> Tuple[NDArray[np.complex128], BandMatrix]:
    """Diagonal phase factor and the zero-phase operator T0 with T = diag(d) T0."""
    d = np.exp(1j * _site_phases(phases, M))
    return d, _build(emb.corner(), emb, zero_phases(M), M, bc, MatrixKind.T)


# ---------------------------------------------------------------------------
# polar decomposition
# ---------------------------------------------------------------------------

def cell_vectors(emb: UnitaryEmbedding) -> Tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Per-cell eigenvectors of K for the eigenvalues 1 and g."""
    n = np.sqrt(abs(emb.q) ** 2 + abs(emb.s) ** 2)
    v1 = np.array([emb.s, -emb.q], dtype=np.complex128) / n
    v2 = np.array([np.conj(emb.q), np.conj(emb.s)], dtype=np.complex128) / n
    return v1, v2


def kappa_block(emb: UnitaryEmbedding) -> NDArray[np.complex128]:
    """The 2x2 block of K on one cell (g < 1)."""
    q, s, g = emb.q, emb.s, emb.g
    aq, as_ = abs(q) ** 2, abs(s) ** 2
    n2 = aq + as_
    return np.array(
        [
            [g * aq + as_, np.conj(q) * s * (g - 1.0)],
            [q * np.conj(s) * (g - 1.0), g * as_ + aq],
        ],
        dtype=np.complex128,
    ) / n2


def _block_diag(block: NDArray[np.complex128], M: int) -> NDArray[np.complex128]:
    return np.kron(np.eye(M), block)


def _cell_basis(vec: NDArray[np.complex128], M: int) -> NDArray[np.complex128]:
    """2M x M matrix whose column k is vec placed on cell k."""
    return np.kron(np.eye(M), vec.reshape(2, 1))


def build_polar(
    emb: UnitaryEmbedding,
    phases: PhaseField,
    M: int,
    bc: Union[BoundaryCondition, str] = BoundaryCondition.PERIODIC,
    tol: Optional[float] = None,
) -> PolarParts:
    """
    Exact polar factors T = V K.

    K is block diagonal with blocks P1 + g P2 on every cell; V is the band
    operator of the V coin with the same phases. A coin with g within the
    configured cutoff of 1 is treated as unitary (K = I, V = T) and flagged.

    Raises:
        NumericFailure: If |T - VK| exceeds the tolerance
    """
    settings = get_settings()
    tol = settings.tolerance if tol is None else tol
    bc = BoundaryCondition(bc)
    t_mat = build_T(emb, phases, M, bc)
    n = 2 * M

    if emb.g >= 1.0 - settings.unitary_g_cutoff:
        logger.warning(f"g = {emb.g:.12g} treated as 1: K = I, V = T")
        eye = np.eye(n, dtype=np.complex128)
        return PolarParts(
            V=t_mat.model_copy(update={"kind": MatrixKind.V}),
            K=BandMatrix(data=eye, bc=bc, kind=MatrixKind.K),
            P1=BandMatrix(data=eye.copy(), bc=bc, kind=MatrixKind.GENERIC),
            P2=BandMatrix(data=np.zeros((n, n), dtype=np.complex128), bc=bc, kind=MatrixKind.GENERIC),
            g=emb.g,
            unitary_limit=True,
            residual=0.0,
        )

    v1, v2 = cell_vectors(emb)
    k_mat = _block_diag(kappa_block(emb), M)
    p1 = _block_diag(np.outer(v1, v1.conj()), M)
    p2 = _block_diag(np.outer(v2, v2.conj()), M)
    v_mat = _build(emb.v_coin(), emb, phases, M, bc, MatrixKind.V)

    residual = float(np.linalg.norm(t_mat.data - v_mat.data @ k_mat, 2))
    if residual > tol:
        logger.error(f"Polar residual {residual:.3e} above tolerance {tol:g}")
        raise NumericFailure(f"T != VK: residual {residual:.3e}")

    return PolarParts(
        V=v_mat,
        K=BandMatrix(data=k_mat, bc=bc, kind=MatrixKind.K),
        P1=BandMatrix(data=p1, bc=bc),
        P2=BandMatrix(data=p2, bc=bc),
        g=emb.g,
        residual=residual,
        basis1=_cell_basis(v1, M),
        basis2=_cell_basis(v2, M),
    )


def compression(polar: PolarParts, i: int, j: int) -> NDArray[np.complex128]:
    """Matrix of P_i V P_j in the per-cell bases: M x M."""
    if polar.basis1 is None:
        raise ConfigError("compressions need g < 1")
    bases = {1: polar.basis1, 2: polar.basis2}
    return bases[i].conj().T @ polar.V.data @ bases[j]


def compression_norms(polar: PolarParts) -> Dict[str, float]:
    """Operator norms of the four truncated compressions."""
    return {
        key: float(np.linalg.norm(compression(polar, int(key[0]), int(key[1])), 2))
        for key in BLOCK_KEYS
    }


# ---------------------------------------------------------------------------
# tridiagonal block data
# ---------------------------------------------------------------------------

def annulus_radius(norms: Dict[str, float], g: float) -> float:
    """Outer radius r(V) from the four compression norms."""
    a, d = norms["11"], g * norms["22"]
    return 0.5 * (a + d + np.sqrt((a - d) ** 2 + 4.0 * g * norms["21"] * norms["12"]))


def annulus_condition(norms: Dict[str, float], g: float) -> bool:
    """|V11| < 1 and g < (1 - |V11|) / (|V21||V12| + |V22|(1 - |V11|))."""
    v11 = norms["11"]
    if v11 >= 1.0:
        return False
    denom = norms["21"] * norms["12"] + norms["22"] * (1.0 - v11)
    if denom <= 0.0:
        return True
    return bool(g < (1.0 - v11) / denom)


def tridiag_blocks(emb: UnitaryEmbedding) -> TridiagonalBlockData:
    """
    Hopping coefficients w+ (towards cell k-1) and w- (towards cell k+1) of
    the four compressions P_i V P_j, their norms |w+| + |w-|, r(V) and the
    annulus condition.

    Raises:
        ConfigError: If g is (numerically) 1, where the blocks are undefined
    """
    if emb.g >= 1.0 - get_settings().unitary_g_cutoff:
        raise ConfigError("tridiagonal blocks are undefined for g = 1")
    q, s, r, t, g = emb.q, emb.s, emb.r, emb.t, emb.g
    d = 1.0 - g * g
    up = s * emb.gamma - q * emb.delta
    down = s * emb.alpha - q * emb.beta
    w_plus = {
        "11": -np.conj(q) * up / d,
        "12": np.conj(q) * t / d,
        "21": s * up / d,
        "22": -s * t / d,
    }
    w_minus = {
        "11": np.conj(s) * down / d,
        "12": -np.conj(s) * r / d,
        "21": q * down / d,
        "22": -q * r / d,
    }
    norms = {key: float(abs(w_plus[key]) + abs(w_minus[key])) for key in BLOCK_KEYS}
    return TridiagonalBlockData(
        w_plus={k: complex(v) for k, v in w_plus.items()},
        w_minus={k: complex(v) for k, v in w_minus.items()},
        norms=norms,
        g=g,
        r_v=float(annulus_radius(norms, g)),
        gap_ok=annulus_condition(norms, g),
    )


def v11_norm_closed_form(emb: UnitaryEmbedding) -> float:
    """|V11| from the corner alone: (|delta - conj(alpha) det| + |alpha - conj(delta) det|) / (1 - g^2)."""
    det = emb.det()
    num = abs(emb.delta - np.conj(emb.alpha) * det) + abs(emb.alpha - np.conj(emb.delta) * det)
    return float(num / (1.0 - emb.g ** 2))


# ---------------------------------------------------------------------------
# doubled operator
# ---------------------------------------------------------------------------

def build_Ttilde(emb: UnitaryEmbedding, phases: PhaseField, M: int) -> BandMatrix:
    """
    T^2 compressed to the even cells (sites 4k, 4k+1 relabeled 2k, 2k+1).

    Raises:
        ConfigError: If M is odd
    """
    if M % 2:
        raise ConfigError(f"the doubled operator needs an even cell count, got M = {M}")
    t_mat = build_T(emb, phases, M, BoundaryCondition.PERIODIC)
    idx = np.sort(np.concatenate([4 * np.arange(M // 2), 4 * np.arange(M // 2) + 1]))
    t2 = t_mat.data @ t_mat.data
    manifest = dict(t_mat.manifest, doubled=True)
    return BandMatrix(
        data=t2[np.ix_(idx, idx)],
        bc=BoundaryCondition.PERIODIC,
        kind=MatrixKind.TTILDE,
        manifest=manifest,
    )


def build_Ttilde_factorized(
    emb: UnitaryEmbedding, phases: PhaseField, M: int
) -> Tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
    """
    The doubled operator as B_odd @ B_even.

    B_even acts on pairs (2k, 2k+1) with S(2k) = diag(e^{iw_{4k-1}}, e^{iw_{4k+2}}) [[gamma, delta], [alpha, beta]];
    B_odd acts on pairs (2k+1, 2k+2 mod M) with S(2k+1) = diag(e^{iw_{4k+1}}, e^{iw_{4k+4}}) [[gamma, delta], [alpha, beta]].
    Phase indices are taken mod 2M.

    Returns:
        (B_even, B_odd, product)
    """
    if M % 2:
        raise ConfigError(f"the doubled operator needs an even cell count, got M = {M}")
    omega = _site_phases(phases, M)
    n_sites = 2 * M
    alpha, beta, gamma, delta = emb.alpha, emb.beta, emb.gamma, emb.delta
    b_even = np.zeros((M, M), dtype=np.complex128)
    b_odd = np.zeros((M, M), dtype=np.complex128)
    for k in range(M // 2):
        top = np.exp(1j * omega[(4 * k - 1) % n_sites])
        bottom = np.exp(1j * omega[(4 * k + 2) % n_sites])
        a, b = 2 * k, 2 * k + 1
        b_even[a, a] = top * gamma
        b_even[a, b] = top * delta
        b_even[b, a] = bottom * alpha
        b_even[b, b] = bottom * beta

        top = np.exp(1j * omega[(4 * k + 1) % n_sites])
        bottom = np.exp(1j * omega[(4 * k + 4) % n_sites])
        a, b = 2 * k + 1, (2 * k + 2) % M
        b_odd[a, a] = top * gamma
        b_odd[a, b] = top * delta
        b_odd[b, a] = bottom * alpha
        b_odd[b, b] = bottom * beta
    return b_even, b_odd, b_odd @ b_even


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def matches_diagonal_pattern(emb: UnitaryEmbedding, tol: float = 1e-12) -> bool:
    """Embedding of the form [[a, r, 0], [q, g, 0], [0, 0, d]] or [[a, 0, 0], [0, g, s], [0, t, d]]."""
    small = lambda z: abs(z) <= tol  # noqa: E731
    first = small(emb.beta) and small(emb.s) and small(emb.gamma) and small(emb.t)
    second = small(emb.r) and small(emb.beta) and small(emb.q) and small(emb.gamma)
    return first or second


def matches_offdiagonal_pattern(emb: UnitaryEmbedding, tol: float = 1e-12) -> bool:
    """Embedding of the form [[0, 0, b], [q, g, 0], [c, t, 0]] or [[0, r, b], [0, g, s], [c, 0, 0]]."""
    small = lambda z: abs(z) <= tol  # noqa: E731
    first = small(emb.alpha) and small(emb.r) and small(emb.s) and small(emb.delta)
    second = small(emb.alpha) and small(emb.q) and small(emb.t) and small(emb.delta)
    return first or second


def classify_structure(emb: UnitaryEmbedding, tol: float = 1e-12) -> StructureReport:
    """Structural flags and closed-form spectral data of the special cases."""
    notes = []
    g = emb.g
    unitary = g >= 1.0 - get_settings().unitary_g_cutoff
    cnu = (not unitary) and abs(emb.alpha) < 1.0 - tol and abs(emb.delta) < 1.0 - tol

    if unitary:
        v_off = abs(emb.alpha) <= tol and abs(emb.delta) <= tol
        v_diag = abs(emb.beta) <= tol or abs(emb.gamma) <= tol
        notes.append("g = 1: V = T, flags read from the corner")
    else:
        blocks = tridiag_blocks(emb)
        v_off = blocks.norms["11"] <= tol and blocks.norms["22"] <= tol
        v_diag = blocks.norms["12"] <= tol or blocks.norms["21"] <= tol

    special_g = None
    special_theta = None
    ad_zero = abs(emb.alpha) <= tol and abs(emb.delta) <= tol
    bc_zero = abs(emb.beta) <= tol and abs(emb.gamma) <= tol
    if ad_zero:
        # unitarity forces |gamma| = 1 (q = t = 0) or |beta| = 1 (s = r = 0)
        if abs(abs(emb.gamma) - 1.0) <= 1e3 * tol:
            special_g = float(abs(emb.beta))
        elif abs(abs(emb.beta) - 1.0) <= 1e3 * tol:
            special_g = float(abs(emb.gamma))
        else:
            special_g = float(min(abs(emb.beta), abs(emb.gamma)))
            notes.append("alpha = delta = 0 without a unimodular corner entry")
        special_theta = float(np.angle(emb.beta * emb.gamma))
        notes.append("eigenvalue pairs +-sqrt(g) e^{i theta/2} e^{i(w_{2j+1} + w_{2j+2})/2}")
    elif bc_zero:
        special_g = float(min(abs(emb.alpha), abs(emb.delta)))
        notes.append("spectrum is the union of the unit circle and the circle of radius g")
    if special_g is not None and abs(special_g - g) > 1e3 * tol:
        notes.append(f"closed-form g {special_g:.12g} differs from embedding g {g:.12g}")

    return StructureReport(
        cnu=cnu,
        v_offdiagonal=v_off,
        v_diagonal=v_diag,
        special_alpha_delta_zero=ad_zero,
        special_beta_gamma_zero=bc_zero,
        special_g=special_g,
        special_theta=special_theta,
        notes=notes,
    )


def beta_gamma_zero_spectrum(emb: UnitaryEmbedding) -> Tuple[float, float]:
    """Radii of the two circles making up the spectrum when beta = gamma = 0."""
    if abs(emb.beta) > 1e-12 or abs(emb.gamma) > 1e-12:
        raise ConfigError("coin does not have beta = gamma = 0")
    radii = sorted((float(abs(emb.alpha)), float(abs(emb.delta))))
    return radii[0], radii[1]


def alpha_delta_zero_spectrum(emb: UnitaryEmbedding, phases: PhaseField, M: int) -> NDArray[np.complex128]:
    """
    Closed-form spectrum of the periodic truncation when alpha = delta = 0.

    T then splits into 2x2 blocks on span{e_{2j+1}, e_{2j+2}} with eigenvalues
    +-sqrt(g) e^{i theta/2} e^{i(w_{2j+1} + w_{2j+2})/2}.
    """
    report = classify_structure(emb)
    if not report.special_alpha_delta_zero:
        raise ConfigError("coin does not have alpha = delta = 0")
    omega = _site_phases(phases, M)
    n = 2 * M
    j = np.arange(M)
    total = omega[(2 * j + 1) % n] + omega[(2 * j + 2) % n]
    root = np.sqrt(report.special_g) * np.exp(0.5j * (report.special_theta + total))
    return np.concatenate([root, -root])
