"""
Pydantic models for cmvband's data structures.
Defines the coin, operator, symbol, region, spectrum and walk records plus the
experiment configuration schema.
"""

from __future__ import annotations

from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from core.config import get_settings


def _coerce_complex(value: Any) -> complex:
    """Accept complex numbers or [re, im] pairs."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex pair must have two entries, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)


def _complex_pair(value: complex) -> List[float]:
    return [float(value.real), float(value.imag)]


def _as_complex_array(value: Any) -> np.ndarray:
    if isinstance(value, np.ndarray):
        return value.astype(np.complex128, copy=False)
    arr = np.asarray(value)
    # nested lists ending in [re, im] pairs come back from JSON
    if arr.dtype.kind in "fiu" and arr.ndim >= 1 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(np.complex128)


def _array_pairs(value: np.ndarray) -> Any:
    arr = np.asarray(value, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _as_real_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _real_list(value: np.ndarray) -> Any:
    return np.asarray(value, dtype=np.float64).tolist()


ComplexValue = Annotated[
    complex,
    BeforeValidator(_coerce_complex),
    PlainSerializer(_complex_pair, when_used="json"),
]
ComplexArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_complex_array),
    PlainSerializer(_array_pairs, when_used="json"),
]
RealArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_real_array),
    PlainSerializer(_real_list, when_used="json"),
]


class BoundaryCondition(str, Enum):
    """Truncation boundary conditions."""
    OPEN = "open"
    PERIODIC = "periodic"


class MatrixKind(str, Enum):
    """Which operator a BandMatrix truncates."""
    T = "T"
    V = "V"
    K = "K"
    TTILDE = "Ttilde"
    GENERIC = "generic"


class PhaseDistribution(str, Enum):
    """Single-site distribution of the random phases."""
    POINT = "point"
    UNIFORM = "uniform"
    TORUS = "torus"
    WORD = "word"


class RegionVariant(str, Enum):
    """Certified resolvent region shapes."""
    DISC = "disc"
    HALF_PLANE = "half_plane"
    FORM = "form"
    TRIANGLE = "triangle"
    GAMMA = "gamma"
    ANNULUS = "annulus"
    PRODUCT = "product"


class GraphKind(str, Enum):
    """Graphs the walk simulator runs on."""
    TREE = "tree"
    LATTICE = "lattice"


# ---------------------------------------------------------------------------
# coin
# ---------------------------------------------------------------------------

class CoinContraction(BaseModel):
    """
    The 2x2 coin contraction C0 with rows (alpha, beta), (gamma, delta).
    Both singular values must be at most 1 + 1e-12.
    """
    alpha: ComplexValue = Field(..., description="C0[0, 0]")
    beta: ComplexValue = Field(..., description="C0[0, 1]")
    gamma: ComplexValue = Field(..., description="C0[1, 0]")
    delta: ComplexValue = Field(..., description="C0[1, 1]")

    @model_validator(mode="after")
    def _check_contraction(self) -> "CoinContraction":
        sv = np.linalg.svd(self.matrix(), compute_uv=False)
        if sv[0] > 1.0 + 1e-12:
            raise ValueError(f"C0 is not a contraction: largest singular value {sv[0]:.15g}")
        return self

    def matrix(self) -> np.ndarray:
        return np.array([[self.alpha, self.beta], [self.gamma, self.delta]], dtype=np.complex128)

    @classmethod
    def from_matrix(cls, c0: Any) -> "CoinContraction":
        m = np.asarray(c0, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValueError(f"C0 must be 2x2, got shape {m.shape}")
        return cls(alpha=m[0, 0], beta=m[0, 1], gamma=m[1, 0], delta=m[1, 1])


class FamilyParams(BaseModel):
    """Angles (radians) of the two explicit real orthogonal coin families."""
    xi: float = Field(..., ge=0.0, le=np.pi / 2, description="First family angle")
    eta: float = Field(..., ge=0.0, le=np.pi / 2, description="Second family angle")


class UnitaryEmbedding(BaseModel):
    """
    The 3x3 unitary embedding laid out as
        [[alpha, r, beta], [q, g, s], [gamma, t, delta]].
    g is real in [0, 1] and chi = arg det C0 (0 when g = 0).
    """
    alpha: ComplexValue
    r: ComplexValue
    beta: ComplexValue
    q: ComplexValue
    g: float = Field(..., ge=0.0, le=1.0)
    s: ComplexValue
    gamma: ComplexValue
    t: ComplexValue
    delta: ComplexValue
    chi: float = Field(0.0, description="arg(alpha*delta - beta*gamma) in radians")

    @model_validator(mode="after")
    def _check_unitary(self) -> "UnitaryEmbedding":
        tol = get_settings().tolerance
        m = self.matrix()
        defect = float(np.linalg.norm(m.conj().T @ m - np.eye(3), 2))
        if defect > tol:
            raise ValueError(f"embedding is not unitary: defect {defect:.3e}")
        if abs(abs(self.det()) - self.g) > tol:
            raise ValueError(f"|det C0| = {abs(self.det()):.15g} differs from g = {self.g:.15g}")
        return self

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.alpha, self.r, self.beta],
                [self.q, self.g, self.s],
                [self.gamma, self.t, self.delta],
            ],
            dtype=np.complex128,
        )

    def corner(self) -> np.ndarray:
        return np.array([[self.alpha, self.beta], [self.gamma, self.delta]], dtype=np.complex128)

    def det(self) -> complex:
        return complex(self.alpha * self.delta - self.beta * self.gamma)

    def v_coin(self) -> np.ndarray:
        """Coin of the unitary polar factor V."""
        h = 1.0 + self.g
        return np.array(
            [
                [self.alpha - self.q * self.r / h, self.beta - self.s * self.r / h],
                [self.gamma - self.q * self.t / h, self.delta - self.s * self.t / h],
            ],
            dtype=np.complex128,
        )

    @classmethod
    def from_matrix(cls, c: Any, chi: Optional[float] = None) -> "UnitaryEmbedding":
        m = np.asarray(c, dtype=np.complex128)
        if m.shape != (3, 3):
            raise ValueError(f"embedding must be 3x3, got shape {m.shape}")
        if abs(m[1, 1].imag) > 1e-12 or m[1, 1].real < -1e-12:
            raise ValueError(f"middle entry must be real and nonnegative, got {m[1, 1]}")
        det = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        if chi is None:
            chi = float(np.angle(det)) if abs(det) > 0.0 else 0.0
        return cls(
            alpha=m[0, 0], r=m[0, 1], beta=m[0, 2],
            q=m[1, 0], g=float(min(max(m[1, 1].real, 0.0), 1.0)), s=m[1, 2],
            gamma=m[2, 0], t=m[2, 1], delta=m[2, 2],
            chi=chi,
        )


# ---------------------------------------------------------------------------
# bandop
# ---------------------------------------------------------------------------

class PhaseField(BaseModel):
    """
    Random phase specification plus its realization.
    realized[k] is the phase of site window_start + k.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    distribution: PhaseDistribution = Field(PhaseDistribution.UNIFORM)
    epsilon: float = Field(0.0, ge=0.0, description="Support half-width (radians)")
    theta0: float = Field(0.0, description="Point-mass location")
    seed: int = Field(0, ge=0, lt=2**64, description="64-bit seed")
    window_start: int = Field(-1, description="Site index of realized[0]")
    realized: RealArray = Field(default_factory=lambda: np.zeros(0))
    word: Optional[List[float]] = Field(None, description="Repeating word for periodic fields")

    @property
    def window_stop(self) -> int:
        return self.window_start + len(self.realized)

    def phase(self, j: int) -> float:
        k = j - self.window_start
        if k < 0 or k >= len(self.realized):
            raise IndexError(f"site {j} outside realized window [{self.window_start}, {self.window_stop})")
        return float(self.realized[k])

    def site_phases(self, n_sites: int) -> np.ndarray:
        """Phases of sites 0 .. n_sites-1."""
        k0 = -self.window_start
        if k0 < 0 or k0 + n_sites > len(self.realized):
            raise IndexError(f"window [{self.window_start}, {self.window_stop}) does not cover {n_sites} sites")
        return np.asarray(self.realized[k0:k0 + n_sites], dtype=np.float64)

    def support(self) -> Tuple[float, float]:
        if self.distribution == PhaseDistribution.POINT:
            return (self.theta0, self.theta0)
        if self.distribution == PhaseDistribution.TORUS:
            return (-np.pi, np.pi)
        if self.distribution == PhaseDistribution.WORD:
            w = np.asarray(self.word or [0.0])
            return (float(w.min()), float(w.max()))
        return (-self.epsilon, self.epsilon)

    def in_support(self, values: Any, tol: float = 1e-15) -> bool:
        lo, hi = self.support()
        v = np.asarray(values, dtype=np.float64)
        if self.distribution == PhaseDistribution.TORUS:
            return bool(np.all(np.isfinite(v)))
        return bool(np.all((v >= lo - tol) & (v <= hi + tol)))

    @classmethod
    def from_word(cls, word: Any, M: int) -> "PhaseField":
        """Periodic field repeating `word` over the window -1 .. 2M+2."""
        from core.bandop import periodic_phases
        return periodic_phases(word, M)


class BandMatrix(BaseModel):
    """Finite truncation of a banded operator, stored densely."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: ComplexArray
    bc: BoundaryCondition = BoundaryCondition.PERIODIC
    kind: MatrixKind = MatrixKind.GENERIC
    manifest: Dict[str, Any] = Field(default_factory=dict, description="Reproduction parameters")

    @field_validator("data")
    @classmethod
    def _square(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"matrix must be square, got shape {v.shape}")
        return v

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])

    def to_rows(self, atol: float = 0.0) -> List[Tuple[int, int, float, float]]:
        rows, cols = np.nonzero(np.abs(self.data) > atol)
        return [
            (int(i), int(j), float(self.data[i, j].real), float(self.data[i, j].imag))
            for i, j in zip(rows, cols)
        ]


class PolarParts(BaseModel):
    """Exact polar factors T = V K and the spectral projectors of K."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    V: BandMatrix
    K: BandMatrix
    P1: BandMatrix
    P2: BandMatrix
    g: float
    unitary_limit: bool = Field(False, description="g treated as 1: K = I, V = T")
    residual: float = Field(0.0, description="Operator norm of T - V K")
    basis1: Optional[ComplexArray] = Field(None, description="Columns v1 per cell (2M x M)")
    basis2: Optional[ComplexArray] = Field(None, description="Columns v2 per cell (2M x M)")


BLOCK_KEYS = ("11", "12", "21", "22")


class TridiagonalBlockData(BaseModel):
    """Hopping coefficients of the compressions P_i V P_j and the annulus data."""
    w_plus: Dict[str, ComplexValue]
    w_minus: Dict[str, ComplexValue]
    norms: Dict[str, float]
    g: float
    r_v: float = Field(..., description="Outer radius of the certified annulus")
    gap_ok: bool = Field(..., description="Whether the annulus condition holds")

    def norm(self, i: int, j: int) -> float:
        return self.norms[f"{i}{j}"]


class StructureReport(BaseModel):
    """Structural flags of a coin and closed-form spectra where available."""
    cnu: bool
    v_offdiagonal: bool
    v_diagonal: bool
    special_alpha_delta_zero: bool
    special_beta_gamma_zero: bool
    special_g: Optional[float] = None
    special_theta: Optional[float] = None
    notes: List[str] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------

class SymbolSpectrum(BaseModel):
    """Eigenvalues of a Bloch symbol sampled over quasimomenta."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: RealArray
    eigenvalues: ComplexArray = Field(..., description="Shape (len(x), k)")
    label: str = "symbol"

    @property
    def min_modulus(self) -> float:
        return float(np.min(np.abs(self.eigenvalues))) if self.eigenvalues.size else float("nan")

    @property
    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else float("nan")

    def points(self) -> np.ndarray:
        return np.asarray(self.eigenvalues).ravel()


class PeriodicWord(BaseModel):
    """Phases of one period of a periodic phase configuration."""
    phases: List[float] = Field(..., min_length=2)

    @field_validator("phases")
    @classmethod
    def _even(cls, v: List[float]) -> List[float]:
        if len(v) % 2:
            raise ValueError(f"period length must be even, got {len(v)}")
        return v

    @property
    def length(self) -> int:
        return len(self.phases)

    def repeated(self, times: int) -> "PeriodicWord":
        return PeriodicWord(phases=list(self.phases) * times)


class HullEstimate(BaseModel):
    """Union of periodic-approximant spectra, a lower bound for the random spectrum."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: ComplexArray
    by_length: Dict[int, ComplexArray] = Field(default_factory=dict)
    l_max: int
    words_per_length: int
    x_samples: int
    distribution: PhaseDistribution
    annulus: Optional[Tuple[float, float]] = Field(None, description="Analytic torus sweep radii")
    contains_origin: bool = False
    exact: bool = Field(False, description="Equality with the random spectrum is known")


class EllipseSymbol(BaseModel):
    """Scalar symbol e^{ix} w_+ + e^{-ix} w_- of a diagonal compression."""
    block: str
    w_plus: ComplexValue
    w_minus: ComplexValue
    semi_major: float
    semi_minor: float
    rotation: float


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

class GapArc(BaseModel):
    """Open arc {e^{i(rotation + phi)}: |phi| < theta} in the resolvent set of V."""
    theta: float = Field(..., gt=0.0, lt=np.pi)
    rotation: float = 0.0


class RegionDescriptor(BaseModel):
    """One certified resolvent region with the inequality that activated it."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    variant: RegionVariant
    params: Dict[str, float] = Field(default_factory=dict)
    rotation: float = 0.0
    open: bool = True
    label: str = ""
    activation: str = Field("", description="Inequality under which the region is certified")
    sigma_a: Optional[ComplexArray] = Field(None, description="Samples of sigma(A), product regions")
    sigma_b: Optional[ComplexArray] = Field(None, description="Samples of sigma(B), product regions")

    def contains(self, z: Any) -> Any:
        from core.regions import region_contains
        return region_contains(self, z)


class Certificate(BaseModel):
    """Composite resolvent certificate for one coin and phase support."""
    regions: List[RegionDescriptor] = Field(default_factory=list)
    gaps: List[GapArc] = Field(default_factory=list)
    g: float
    epsilon: float
    r_v: Optional[float] = None
    gap_ok: Optional[bool] = None
    splits: Optional[bool] = None
    split_margins: List[float] = Field(default_factory=list)

    def contains(self, z: Any) -> Any:
        z = np.asarray(z, dtype=np.complex128)
        out = np.zeros(z.shape, dtype=bool)
        for region in self.regions:
            out |= np.asarray(region.contains(z), dtype=bool)
        return out


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

class SpectrumEstimate(BaseModel):
    """Eigenvalue multiset with provenance."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    eigenvalues: ComplexArray
    residuals: Optional[RealArray] = None
    tolerance: float
    source: Dict[str, Any] = Field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(np.asarray(self.eigenvalues).size)


class PseudospectrumGrid(BaseModel):
    """sigma_min(m - z) over a rectangular grid."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    re: RealArray
    im: RealArray
    values: RealArray = Field(..., description="Shape (len(im), len(re))")
    epsilons: List[float] = Field(default_factory=list)
    label: str = "pseudospectrum"

    def nodes(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.re, self.im)
        return xx + 1j * yy

    def indicator(self, eps: float) -> np.ndarray:
        return np.asarray(self.values) <= eps


# ---------------------------------------------------------------------------
# walk
# ---------------------------------------------------------------------------

class CoinU4(BaseModel):
    """4x4 walk coin: the 3x3 embedding on {a, b, a^-1} and e^{i theta} on b^-1."""
    embedding: UnitaryEmbedding
    theta: float = 0.0

    def matrix(self) -> np.ndarray:
        c = np.zeros((4, 4), dtype=np.complex128)
        c[:3, :3] = self.embedding.matrix()
        c[3, 3] = np.exp(1j * self.theta)
        return c


class WalkGraph(BaseModel):
    """Finite tree or lattice with a neighbour table indexed [vertex, letter]."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: GraphKind
    size: int = Field(..., ge=1, description="Tree depth or lattice side")
    neighbors: np.ndarray = Field(..., description="(N, 4) int, -1 beyond the boundary")
    keys: np.ndarray = Field(..., description="Radix word codes (tree) or flat coordinates (lattice)")
    origin: int = 0

    @property
    def n_vertices(self) -> int:
        return int(self.neighbors.shape[0])


class WalkState(BaseModel):
    """Amplitudes per (vertex, coin letter) with the phase field of the walk."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    graph: WalkGraph
    amplitudes: np.ndarray
    phases: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


class DecayReport(BaseModel):
    """Autocorrelation sequence and its geometric decay check."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sequence: ComplexArray
    rate_bound: Optional[float] = None
    constant: Optional[float] = None
    certified: bool = False
    passed: Optional[bool] = None


# ---------------------------------------------------------------------------
# cli
# ---------------------------------------------------------------------------

class AcceptanceResult(BaseModel):
    """Outcome of one acceptance check."""
    name: str
    passed: bool
    metric: float
    threshold: float
    elapsed: float = 0.0
    details: Dict[str, Any] = Field(default_factory=dict)


class CoinConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Optional[Literal["drift", "g0"]] = None
    xi: Optional[float] = None
    eta: Optional[float] = None
    entries: Optional[List[List[float]]] = Field(None, description="alpha, beta, gamma, delta as [re, im]")
    embedding: Optional[List[List[List[float]]]] = Field(None, description="3x3 embedding as [re, im] pairs")

    @model_validator(mode="after")
    def _one_source(self) -> "CoinConfig":
        given = [self.family is not None, self.entries is not None, self.embedding is not None]
        if sum(given) != 1:
            raise ValueError("coin needs exactly one of family, entries, embedding")
        if self.family is not None and (self.xi is None or self.eta is None):
            raise ValueError("family coins need xi and eta")
        return self


class PhaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    distribution: PhaseDistribution = PhaseDistribution.UNIFORM
    epsilon: float = Field(0.0, ge=0.0)
    theta0: float = 0.0
    seed: int = Field(0, ge=0, lt=2**64)


class SizeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    M: int = Field(64, ge=2, le=512)
    bc: BoundaryCondition = BoundaryCondition.PERIODIC
    lengths: List[int] = Field(default_factory=lambda: [2, 4, 8])
    x_samples: int = Field(2048, ge=8)
    words_per_length: int = Field(200, ge=1)
    grid: int = Field(0, ge=0, description="Pseudospectrum nodes per axis, 0 disables")
    grid_half_width: float = Field(1.2, gt=0.0)
    epsilons: List[float] = Field(default_factory=lambda: [1e-3, 1e-2, 1e-1])


class RegionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    theta: Optional[float] = Field(None, gt=0.0, lt=np.pi, description="Figure mode half-gap angle")
    g: Optional[float] = Field(None, gt=0.0, lt=1.0, description="Figure mode g")
    boundary_points: int = Field(400, ge=8)


class WalkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    graph: GraphKind = GraphKind.TREE
    depth: int = Field(12, ge=2, le=14)
    side: int = Field(25, ge=5)
    n_max: int = Field(10, ge=0)
    theta: float = 0.0


class ExperimentConfig(BaseModel):
    """JSON experiment schema; unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")

    command: Literal["run", "figures", "certify", "spectra", "hull", "walk"] = "run"
    coin: Optional[CoinConfig] = None
    phases: PhaseConfig = Field(default_factory=PhaseConfig)
    sizes: SizeConfig = Field(default_factory=SizeConfig)
    regions: RegionConfig = Field(default_factory=RegionConfig)
    walk: WalkConfig = Field(default_factory=WalkConfig)
    output_dir: Optional[str] = None
    g_check: Optional[float] = Field(None, description="Expected g, verified after embedding")
    dump_matrix: bool = Field(False, description="spectra: also write T and V as (row, col, re, im) tables")


class ReportBundle(BaseModel):
    """Everything one run produced, before and after writing."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    report: Dict[str, Any] = Field(default_factory=dict)
    tables: Dict[str, List[List[Any]]] = Field(default_factory=dict, description="CSV name -> rows incl. header")
    figures: Dict[str, Any] = Field(default_factory=dict, description="SVG name -> matplotlib figure")
    written: List[str] = Field(default_factory=list)
