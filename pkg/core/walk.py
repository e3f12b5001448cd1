"""
Random quantum walks on the truncated 4-regular tree and on Z^2.

Coin letters are indexed a = 0, b = 1, a^-1 = 2, b^-1 = 3, so the inverse of
letter k is (k + 2) % 4. One step applies the coin, moves the letter-k
component along letter k and multiplies by the phase of the target slot:

    U x(x)t = sum_t' C[t', t] e^{i w(x t', t')} (x t')(x)t'
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from core.bandop import assemble, tridiag_blocks
from core.config import get_settings
from core.errors import ConfigError, WalkBoundaryError
from core.models import (
    CoinU4,
    DecayReport,
    GraphKind,
    PhaseDistribution,
    PhaseField,
    UnitaryEmbedding,
    WalkGraph,
    WalkState,
)

logger = logging.getLogger(__name__)

A, B, A_INV, B_INV = 0, 1, 2, 3
LETTERS = {"a": A, "b": B, "a^-1": A_INV, "b^-1": B_INV}
MAX_DEPTH = 14
DECAY_MARGIN = 0.05


def inverse(letter: int) -> int:
    return (letter + 2) % 4


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

def build_tree(depth: int) -> WalkGraph:
    """
    The 4-regular tree truncated at word length `depth`, built level by level.

    Vertex keys are base-5 codes of the reduced words (digit = letter + 1), so
    keys increase with vertex index and lookups are binary searches.
    """
    if not 1 <= depth <= MAX_DEPTH:
        raise ConfigError(f"tree depth must lie in [1, {MAX_DEPTH}], got {depth}")
    n_vertices = 2 * 3 ** depth - 1
    neighbors = np.full((n_vertices, 4), -1, dtype=np.int64)
    keys = np.zeros(n_vertices, dtype=np.int64)
    last = np.full(n_vertices, -1, dtype=np.int64)

    level = np.array([0])
    next_free = 1
    for _ in range(depth):
        parents = np.repeat(level, 4)
        letters = np.tile(np.arange(4), level.size)
        allowed = (last[parents] < 0) | (letters != (last[parents] + 2) % 4)
        parents, letters = parents[allowed], letters[allowed]
        children = np.arange(next_free, next_free + parents.size)
        keys[children] = keys[parents] * 5 + letters + 1
        last[children] = letters
        neighbors[parents, letters] = children
        neighbors[children, (letters + 2) % 4] = parents
        next_free += parents.size
        level = children
    logger.debug(f"Tree depth {depth}: {n_vertices} vertices")
    return WalkGraph(kind=GraphKind.TREE, size=depth, neighbors=neighbors, keys=keys, origin=0)


def build_lattice(side: int) -> WalkGraph:
    """side x side block of Z^2 centred at the origin; a <-> +e1, b <-> +e2."""
    if side < 5 or side % 2 == 0:
        raise ConfigError(f"lattice side must be odd and at least 5, got {side}")
    h = side // 2
    x1, x2 = np.meshgrid(np.arange(-h, h + 1), np.arange(-h, h + 1), indexing="ij")
    x1, x2 = x1.ravel(), x2.ravel()
    idx = np.arange(side * side)
    neighbors = np.full((side * side, 4), -1, dtype=np.int64)
    neighbors[:, A] = np.where(x1 < h, idx + side, -1)
    neighbors[:, A_INV] = np.where(x1 > -h, idx - side, -1)
    neighbors[:, B] = np.where(x2 < h, idx + 1, -1)
    neighbors[:, B_INV] = np.where(x2 > -h, idx - 1, -1)
    keys = np.column_stack([x1, x2])
    return WalkGraph(kind=GraphKind.LATTICE, size=side, neighbors=neighbors, keys=keys, origin=int(h * side + h))


def word_code(word: Sequence[int]) -> int:
    code = 0
    for letter in word:
        code = code * 5 + int(letter) + 1
    return code


def vertex_of(graph: WalkGraph, word: Sequence[int]) -> int:
    """Index of the vertex reached from the origin by the reduced word."""
    if graph.kind == GraphKind.LATTICE:
        v = graph.origin
        for letter in word:
            v = int(graph.neighbors[v, letter])
            if v < 0:
                raise ConfigError(f"word {list(word)} leaves the lattice")
        return v
    code = word_code(word)
    pos = int(np.searchsorted(graph.keys, code))
    if pos >= graph.keys.size or graph.keys[pos] != code:
        raise ConfigError(f"word {list(word)} is not a reduced word within depth {graph.size}")
    return pos


def horizontal_vertex(graph: WalkGraph, m: int) -> int:
    """The vertex a^m."""
    letter = A if m >= 0 else A_INV
    return vertex_of(graph, [letter] * abs(m))


# ---------------------------------------------------------------------------
# coin, phases, states
# ---------------------------------------------------------------------------

def coin_u4(emb: UnitaryEmbedding, theta: float = 0.0) -> CoinU4:
    return CoinU4(embedding=emb, theta=theta)


def walk_phases(
    graph: WalkGraph,
    phases: Optional[PhaseField] = None,
    seed: Optional[int] = None,
) -> NDArray[np.float64]:
    """I.i.d. phases per (vertex, letter), drawn in vertex-major order."""
    phases = phases or PhaseField(distribution=PhaseDistribution.POINT)
    rng = np.random.default_rng(phases.seed if seed is None else seed)
    shape = (graph.n_vertices, 4)
    if phases.distribution == PhaseDistribution.POINT:
        return np.full(shape, phases.theta0)
    if phases.distribution == PhaseDistribution.TORUS:
        return rng.uniform(-np.pi, np.pi, size=shape)
    if phases.distribution == PhaseDistribution.UNIFORM:
        if phases.epsilon == 0.0:
            return np.zeros(shape)
        return rng.uniform(-phases.epsilon, phases.epsilon, size=shape)
    raise ConfigError("walk phases support point, uniform and torus distributions")


def basis_state(graph: WalkGraph, vertex: int, letter: int, phases: NDArray[np.float64]) -> WalkState:
    amp = np.zeros((graph.n_vertices, 4), dtype=np.complex128)
    amp[vertex, letter] = 1.0
    return WalkState(graph=graph, amplitudes=amp, phases=phases)


def step(state: WalkState, coin: CoinU4) -> WalkState:
    """
    One step of the random walk.

    Raises:
        WalkBoundaryError: If amplitude would leave the truncated graph
    """
    nbr = state.graph.neighbors
    coined = state.amplitudes @ coin.matrix().T
    lost = (nbr < 0) & (coined != 0)
    if lost.any():
        v = int(np.argwhere(lost)[0][0])
        raise WalkBoundaryError(f"walk support reached the truncation boundary at vertex {v}")
    new = np.zeros_like(coined)
    for letter in range(4):
        valid = nbr[:, letter] >= 0
        targets = nbr[valid, letter]
        new[targets, letter] = coined[valid, letter] * np.exp(1j * state.phases[targets, letter])
    return WalkState(graph=state.graph, amplitudes=new, phases=state.phases)


def evolve(state: WalkState, coin: CoinU4, n_steps: int) -> List[WalkState]:
    """States U^n psi for n = 0 .. n_steps."""
    states = [state]
    for _ in range(n_steps):
        states.append(step(states[-1], coin))
    return states


# ---------------------------------------------------------------------------
# line reduction
# ---------------------------------------------------------------------------

def line_phases(graph: WalkGraph, phases: NDArray[np.float64], half_width: int) -> NDArray[np.float64]:
    """
    Site phases of the horizontal line j in [-half_width, half_width].

    Site e_{2j} is a^j (x) a and e_{2j+1} is a^j (x) a^-1; the returned array is
    indexed by 2 (j + half_width) + e.
    """
    out = np.empty(2 * (2 * half_width + 1))
    for k, j in enumerate(range(-half_width, half_width + 1)):
        v = horizontal_vertex(graph, j)
        out[2 * k] = phases[v, A]
        out[2 * k + 1] = phases[v, A_INV]
    return out


def _line_matrix(emb: UnitaryEmbedding, graph: WalkGraph, phases: NDArray[np.float64], half_width: int) -> NDArray[np.complex128]:
    return assemble(emb.corner(), line_phases(graph, phases, half_width), periodic=False)


def _graph(kind: Union[GraphKind, str], depth: int, side: Optional[int]) -> WalkGraph:
    kind = GraphKind(kind)
    if kind == GraphKind.TREE:
        return build_tree(depth)
    return build_lattice(side if side is not None else 2 * depth + 1)


def _check_depth(n_max: int, depth: int) -> None:
    if n_max < 0:
        raise ConfigError(f"n_max must be nonnegative, got {n_max}")
    if depth < n_max + 2:
        raise ConfigError(f"depth {depth} too small for {n_max} steps (need >= {n_max + 2})")


def dilation_check(
    emb: UnitaryEmbedding,
    phases: Optional[PhaseField] = None,
    n_max: int = 10,
    depth: int = 12,
    graph_kind: Union[GraphKind, str] = GraphKind.TREE,
    side: Optional[int] = None,
    theta: float = 0.0,
) -> float:
    """
    max over n <= n_max and psi in {a^m (x) a, a^m (x) a^-1 : |m| <= 1} of
    |P0 U^n psi - T^n psi|, with T the open line truncation on [-depth, depth]
    carrying the relabeled walk phases.

    Raises:
        ConfigError: If depth < n_max + 2
    """
    _check_depth(n_max, depth)
    graph = _graph(graph_kind, depth, side)
    h = depth if graph.kind == GraphKind.TREE else min(depth, graph.size // 2)
    if graph.kind == GraphKind.LATTICE and graph.size // 2 < n_max + 2:
        raise ConfigError(f"lattice side {graph.size} too small for {n_max} steps")
    omega = walk_phases(graph, phases)
    coin = coin_u4(emb, theta)
    t_line = _line_matrix(emb, graph, omega, h)
    line_vertices = np.array([horizontal_vertex(graph, j) for j in range(-h, h + 1)])

    worst = 0.0
    for m in (-1, 0, 1):
        for e, letter in ((0, A), (1, A_INV)):
            site = 2 * (m + h) + e
            vec = np.zeros(t_line.shape[0], dtype=np.complex128)
            vec[site] = 1.0
            state = basis_state(graph, horizontal_vertex(graph, m), letter, omega)
            for n in range(n_max + 1):
                if n:
                    state = step(state, coin)
                    vec = t_line @ vec
                projected = np.empty_like(vec)
                projected[0::2] = state.amplitudes[line_vertices, A]
                projected[1::2] = state.amplitudes[line_vertices, A_INV]
                worst = max(worst, float(np.max(np.abs(projected - vec))))
    logger.info(f"Dilation check ({graph.kind.value}, n_max={n_max}): deviation {worst:.3e}")
    return worst


def escape_check(
    emb: UnitaryEmbedding,
    phases: Optional[PhaseField] = None,
    n_max: int = 10,
    depth: int = 12,
    graph_kind: Union[GraphKind, str] = GraphKind.TREE,
    side: Optional[int] = None,
    theta: float = 0.0,
) -> float:
    """max |<x (x) b | U^n x (x) t> - delta_{n,0} delta_{b,t}| over t in {a, b, a^-1}, x the origin."""
    _check_depth(n_max, depth)
    graph = _graph(graph_kind, depth, side)
    omega = walk_phases(graph, phases)
    coin = coin_u4(emb, theta)
    x = graph.origin
    worst = 0.0
    for letter in (A, B, A_INV):
        state = basis_state(graph, x, letter, omega)
        for n in range(n_max + 1):
            if n:
                state = step(state, coin)
            expected = 1.0 if (n == 0 and letter == B) else 0.0
            worst = max(worst, abs(state.amplitudes[x, B] - expected))
    return float(worst)


def fit_decay(sequence: Sequence[complex], rate: float) -> Tuple[float, bool]:
    """
    Fit C = max |a_n| / rate^n over the first half of the sequence and check
    |a_n| <= C rate^n on the second half.
    """
    mags = np.abs(np.asarray(sequence))
    n = np.arange(mags.size)
    half = max(mags.size // 2, 1)
    bound = rate ** n
    constant = float(np.max(mags[:half] / bound[:half]))
    passed = bool(np.all(mags[half:] <= constant * bound[half:] + 1e-15))
    return constant, passed


def autocorrelation_decay(
    emb: UnitaryEmbedding,
    phases: Optional[PhaseField] = None,
    n_max: int = 10,
    depth: int = 12,
    graph_kind: Union[GraphKind, str] = GraphKind.TREE,
    side: Optional[int] = None,
    theta: float = 0.0,
) -> DecayReport:
    """
    The sequence <psi, U^n psi> for psi = origin (x) a, with a geometric decay
    check at rate r(V) + 0.05 when the annulus condition holds.
    """
    _check_depth(n_max, depth)
    graph = _graph(graph_kind, depth, side)
    omega = walk_phases(graph, phases)
    coin = coin_u4(emb, theta)
    x = graph.origin
    states = evolve(basis_state(graph, x, A, omega), coin, n_max)
    sequence = np.array([s.amplitudes[x, A] for s in states])

    report = DecayReport(sequence=sequence)
    if emb.g < 1.0 - get_settings().unitary_g_cutoff:
        blocks = tridiag_blocks(emb)
        if blocks.gap_ok:
            rate = blocks.r_v + DECAY_MARGIN
            constant, passed = fit_decay(sequence, rate)
            report = DecayReport(
                sequence=sequence,
                rate_bound=rate,
                constant=constant,
                certified=True,
                passed=passed,
            )
            if not passed:
                logger.warning(f"Autocorrelation exceeds C (r(V) + {DECAY_MARGIN})^n")
    return report


def decay_table(report: DecayReport) -> List[Dict[str, float]]:
    """Rows (n, re, im, abs) for export."""
    seq = np.asarray(report.sequence)
    return [
        {"n": n, "re": float(z.real), "im": float(z.imag), "abs": float(abs(z))}
        for n, z in enumerate(seq)
    ]
