"""
Coin contractions and their U(3) embeddings.

A walk coin with one diagonal entry of modulus one reduces, on the horizontal
line of the tree, to a 2x2 contraction C0. This module builds the 3x3 unitary
that houses C0 in its corners, the two explicit real orthogonal families used
in the experiments, and the JSON coin interface.
"""

import logging
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError
from scipy import linalg
from scipy.stats import unitary_group

from core.config import get_settings
from core.errors import ConfigError, EmbeddingError, NumericFailure
from core.models import CoinConfig, CoinContraction, FamilyParams, UnitaryEmbedding

logger = logging.getLogger(__name__)

__all__ = [
    "embed",
    "det_g_chi",
    "family_drift",
    "family_g0",
    "unitary_iff_unimodular_det",
    "unitarity_defect",
    "regauge",
    "random_contraction",
    "coin_from_document",
]


def unitarity_defect(c: NDArray[np.complex128]) -> float:
    """Largest entry of |C*C - I| and |CC* - I|."""
    c = np.asarray(c, dtype=np.complex128)
    eye = np.eye(c.shape[0])
    return float(max(np.max(np.abs(c.conj().T @ c - eye)), np.max(np.abs(c @ c.conj().T - eye))))


def _fix_gauge(vec: NDArray[np.complex128], threshold: float) -> Tuple[NDArray[np.complex128], complex]:
    """
    Rotate vec so that its first non-negligible component is real and nonnegative.

    Returns:
        The rotated vector and the unit phase it was multiplied by.
    """
    for comp in vec:
        if abs(comp) > threshold:
            phase = np.conj(comp) / abs(comp)
            return vec * phase, complex(phase)
    return vec, 1.0 + 0.0j


def embed(c0: Union[CoinContraction, Any], tol: Optional[float] = None) -> UnitaryEmbedding:
    """
    Embed a 2x2 contraction in U(3) with the layout [[a, r, b], [q, g, s], [c, t, d]].

    g is the smaller singular value of C0. The vector v = conj(q, s) is the
    C0*C0 eigenvector for g^2 scaled to |v|^2 = 1 - g^2 and gauge-fixed so its
    first nonzero component is real and nonnegative. The column u = (r, t)
    equals -C0 v / g, or the gauge-fixed unit vector spanning ker C0* when g = 0.

    Args:
        c0: The contraction, as a model or anything convertible to a 2x2 array
        tol: Unitarity tolerance, defaults to the configured tolerance

    Returns:
        The embedding with g in [0, 1] and chi = arg det C0

    Raises:
        EmbeddingError: If C0 is not a contraction, or its larger singular
            value is not 1 (no single extra dimension can complete it)
        NumericFailure: If the assembled matrix fails the unitarity check
    """
    settings = get_settings()
    tol = settings.tolerance if tol is None else tol

    if not isinstance(c0, CoinContraction):
        try:
            c0 = CoinContraction.from_matrix(c0)
        except (ValidationError, ValueError) as e:
            raise EmbeddingError(f"Rejected coin contraction: {e}") from e

    m = c0.matrix()
    left, sv, right_h = linalg.svd(m)
    s_max, s_min = float(sv[0]), float(sv[1])
    if s_max > 1.0 + tol:
        raise EmbeddingError(f"C0 is not a contraction (largest singular value {s_max:.15g})")
    if abs(s_max - 1.0) > 100 * tol:
        raise EmbeddingError(
            f"C0 has no U(3) completion: sigma(C0*C0) must be {{1, g^2}}, got largest singular value {s_max:.15g}"
        )

    det = complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if s_min >= 1.0 - tol:
        logger.debug("Unitary corner, embedding as block diagonal")
        fields = dict(
            alpha=m[0, 0], r=0.0, beta=m[0, 1],
            q=0.0, g=1.0, s=0.0,
            gamma=m[1, 0], t=0.0, delta=m[1, 1],
            chi=float(np.angle(det)),
        )
    else:
        g = min(max(s_min, 0.0), 1.0)
        norm = np.sqrt(1.0 - g * g)
        w2 = right_h[1].conj()
        u2 = left[:, 1]
        w2, phase = _fix_gauge(w2, settings.gauge_threshold)
        if g > tol:
            # C0 w2 = g u2, so the pairing survives the common phase
            v = norm * w2
            u = -norm * (u2 * phase)
        else:
            g = 0.0
            v = norm * w2
            u, _ = _fix_gauge(u2, settings.gauge_threshold)
        fields = dict(
            alpha=m[0, 0], r=u[0], beta=m[0, 1],
            q=np.conj(v[0]), g=g, s=np.conj(v[1]),
            gamma=m[1, 0], t=u[1], delta=m[1, 1],
            chi=float(np.angle(det)) if g > 0.0 else 0.0,
        )

    try:
        return UnitaryEmbedding(**fields)
    except ValidationError as e:
        logger.error(f"Embedding lost unitarity: {e}")
        raise NumericFailure(f"Embedding of C0 failed its unitarity check: {e}") from e


def det_g_chi(c0: Union[CoinContraction, UnitaryEmbedding]) -> Tuple[float, float]:
    """Return (|det C0|, arg det C0) with chi = 0 by convention when g = 0."""
    m = c0.corner() if isinstance(c0, UnitaryEmbedding) else c0.matrix()
    det = complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    g = abs(det)
    return float(g), float(np.angle(det)) if g > 0.0 else 0.0


def family_drift(params: FamilyParams) -> UnitaryEmbedding:
    """
    The real orthogonal drift family, g = sin(xi).

    Its V coin is the rotation by eta, so sigma(V) consists of the arcs
    arg in [eta, pi - eta] and [-pi + eta, -eta].
    """
    cx, sx = np.cos(params.xi), np.sin(params.xi)
    ce, se = np.cos(params.eta), np.sin(params.eta)
    c = np.array(
        [
            [ce, cx * se, -sx * se],
            [0.0, sx, cx],
            [se, -cx * ce, sx * ce],
        ],
        dtype=np.complex128,
    )
    return UnitaryEmbedding.from_matrix(c)


def family_g0(params: FamilyParams) -> UnitaryEmbedding:
    """The real orthogonal family with vanishing middle entry; |alpha| + |delta| = sin(xi + eta)."""
    cx, sx = np.cos(params.xi), np.sin(params.xi)
    ce, se = np.cos(params.eta), np.sin(params.eta)
    c = np.array(
        [
            [cx * se, ce, -sx * se],
            [sx, 0.0, cx],
            [-cx * ce, se, sx * ce],
        ],
        dtype=np.complex128,
    )
    return UnitaryEmbedding.from_matrix(c, chi=0.0)


def unitary_iff_unimodular_det(w: NDArray[np.complex128], tol: float = 1e-12) -> bool:
    """
    Decide unitarity of a square contraction.

    For contractions, unitarity is equivalent to |det W| = 1; the returned
    verdict is the direct test |W*W - I| <= tol in operator norm.

    Raises:
        ConfigError: If w is not square or not a contraction within tol
    """
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {w.shape}")
    if linalg.svdvals(w)[0] > 1.0 + tol:
        raise ConfigError("matrix is not a contraction")
    return bool(np.linalg.norm(w.conj().T @ w - np.eye(w.shape[0]), 2) <= tol)


def regauge(emb: UnitaryEmbedding, phase: float) -> UnitaryEmbedding:
    """Conjugate by diag(1, e^{-i phase}, 1): the same C0 and g in another gauge."""
    z = np.exp(1j * phase)
    return emb.model_copy(
        update={
            "q": emb.q / z,
            "s": emb.s / z,
            "r": emb.r * z,
            "t": emb.t * z,
        }
    )


def random_contraction(seed: Optional[int] = None) -> CoinContraction:
    """Corner of a Haar-random 3x3 unitary, hence always embeddable."""
    rng = np.random.default_rng(seed)
    u = unitary_group.rvs(3, random_state=rng)
    return CoinContraction.from_matrix([[u[0, 0], u[0, 2]], [u[2, 0], u[2, 2]]])


def coin_from_document(doc: Dict[str, Any]) -> UnitaryEmbedding:
    """
    Build an embedding from a JSON coin document.

    Accepted forms:
        {"family": "drift" | "g0", "xi": ..., "eta": ...}
        {"entries": [[re, im] x 4]}           alpha, beta, gamma, delta
        {"embedding": [[[re, im] x 3] x 3]}   explicit 3x3 matrix

    Raises:
        ConfigError: On schema errors or out-of-range angles
        EmbeddingError: If the coin cannot be embedded
    """
    try:
        cfg = doc if isinstance(doc, CoinConfig) else CoinConfig.model_validate(doc)
        if cfg.family is not None:
            params = FamilyParams(xi=cfg.xi, eta=cfg.eta)
            return family_drift(params) if cfg.family == "drift" else family_g0(params)
    except ValidationError as e:
        raise ConfigError(f"Invalid coin specification: {e}") from e

    if cfg.entries is not None:
        if len(cfg.entries) != 4:
            raise ConfigError(f"entries needs four [re, im] pairs, got {len(cfg.entries)}")
        vals = [complex(p[0], p[1]) for p in cfg.entries]
        return embed(np.array([[vals[0], vals[1]], [vals[2], vals[3]]]))

    raw = np.asarray(cfg.embedding, dtype=np.float64)
    if raw.shape != (3, 3, 2):
        raise ConfigError(f"embedding must be 3x3 [re, im] pairs, got shape {raw.shape}")
    c = raw[..., 0] + 1j * raw[..., 1]
    try:
        return UnitaryEmbedding.from_matrix(c)
    except (ValidationError, ValueError) as e:
        raise EmbeddingError(f"Invalid embedding: {e}") from e
