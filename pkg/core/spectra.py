"""
Dense linear algebra for non-normal truncations: eigenvalues with backward
errors, smallest singular values, pseudospectral grids and polar factors.
"""

import asyncio
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from core.config import get_settings
from core.errors import ConfigError, NumericFailure
from core.models import BandMatrix, BoundaryCondition, PolarParts, PseudospectrumGrid, SpectrumEstimate

logger = logging.getLogger(__name__)

MatrixLike = Union[BandMatrix, NDArray[np.complex128]]
MAX_DIM = 1024


def _dense(m: MatrixLike) -> NDArray[np.complex128]:
    data = m.data if isinstance(m, BandMatrix) else m
    data = np.asarray(data, dtype=np.complex128)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {data.shape}")
    return data


def _source(m: MatrixLike) -> Dict[str, Any]:
    if isinstance(m, BandMatrix):
        return {"kind": m.kind.value, "bc": m.bc.value, **m.manifest}
    return {"kind": "array"}


def operator_norm(m: MatrixLike) -> float:
    return float(linalg.svdvals(_dense(m))[0])


def spectral_radius(m: MatrixLike) -> float:
    return float(np.max(np.abs(eigvals(m).eigenvalues)))


def _schur_eigenvectors(t: NDArray[np.complex128], scale: float) -> NDArray[np.complex128]:
    """Right eigenvectors of an upper triangular matrix by back substitution."""
    n = t.shape[0]
    vecs = np.zeros((n, n), dtype=np.complex128)
    floor = np.finfo(float).eps * scale
    for k in range(n):
        vecs[k, k] = 1.0
        if k == 0:
            continue
        shifted = t[:k, :k] - t[k, k] * np.eye(k)
        diag = np.diagonal(shifted).copy()
        # repeated eigenvalues make the system singular
        small = np.abs(diag) < floor
        shifted[np.arange(k)[small], np.arange(k)[small]] = floor
        vecs[:k, k] = linalg.solve_triangular(shifted, -t[:k, k], check_finite=False)
    return vecs / np.linalg.norm(vecs, axis=0)


def eigvals(m: MatrixLike, tol: Optional[float] = None, with_residuals: bool = False) -> SpectrumEstimate:
    """
    All eigenvalues via balancing, Hessenberg reduction and complex Schur QR.

    Args:
        m: Square matrix, dimension at most 1024
        tol: Backward-error tolerance relative to |m|
        with_residuals: Also compute |m x - l x| / (|m| |x|) per eigenpair

    Raises:
        ConfigError: If m is too large or not square
        NumericFailure: If the QR iteration does not converge or a residual
            exceeds the tolerance
    """
    tol = get_settings().eig_tolerance if tol is None else tol
    a = _dense(m)
    n = a.shape[0]
    if n > MAX_DIM:
        raise ConfigError(f"dense eigensolver limited to dimension {MAX_DIM}, got {n}")
    try:
        balanced, scaling = linalg.matrix_balance(a, permute=True, scale=True)
        h, q_h = linalg.hessenberg(balanced, calc_q=True)
        t, q_s = linalg.schur(h, output="complex")
    except (linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolver failed on {n}x{n} matrix: {e}")
        raise NumericFailure(f"eigensolver did not converge: {e}") from e

    values = np.diagonal(t).copy()
    residuals = None
    if with_residuals:
        norm = max(operator_norm(a), np.finfo(float).tiny)
        vecs = scaling @ (q_h @ (q_s @ _schur_eigenvectors(t, norm)))
        vecs /= np.linalg.norm(vecs, axis=0)
        residuals = np.linalg.norm(a @ vecs - vecs * values, axis=0) / norm
        worst = float(residuals.max()) if n else 0.0
        if worst > tol:
            logger.error(f"Eigenpair residual {worst:.3e} above tolerance {tol:g}")
            raise NumericFailure(f"eigenpair backward error {worst:.3e} exceeds {tol:g}")
    return SpectrumEstimate(eigenvalues=values, residuals=residuals, tolerance=tol, source=_source(m))


def sigma_min(m: MatrixLike, z: complex = 0.0) -> float:
    """Smallest singular value of m - z I."""
    a = _dense(m)
    return float(linalg.svdvals(a - z * np.eye(a.shape[0]), check_finite=False)[-1])


def resolvent_norm(m: MatrixLike, z: complex) -> float:
    s = sigma_min(m, z)
    return float("inf") if s == 0.0 else 1.0 / s


def sigma_min_many(m: MatrixLike, zs: Sequence[complex]) -> NDArray[np.float64]:
    a = _dense(m)
    eye = np.eye(a.shape[0])
    return np.array([linalg.svdvals(a - z * eye, check_finite=False)[-1] for z in np.ravel(zs)])


async def sigma_min_many_async(
    m: MatrixLike,
    zs: Sequence[complex],
    max_workers: Optional[int] = None,
    chunk: int = 64,
) -> NDArray[np.float64]:
    """sigma_min over a sample set, chunks evaluated in worker threads; order preserved."""
    max_workers = get_settings().max_workers if max_workers is None else max_workers
    a = _dense(m)
    flat = np.ravel(np.asarray(zs, dtype=np.complex128))
    semaphore = asyncio.Semaphore(max_workers)

    async def run(part: NDArray[np.complex128]) -> NDArray[np.float64]:
        async with semaphore:
            return await asyncio.to_thread(sigma_min_many, a, part)

    parts = [flat[k:k + chunk] for k in range(0, flat.size, chunk)]
    results = await asyncio.gather(*(run(p) for p in parts))
    return np.concatenate(results) if results else np.zeros(0)


def _axes(
    resolution: Optional[int],
    half_width: Optional[float],
    re: Optional[Sequence[float]],
    im: Optional[Sequence[float]],
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    settings = get_settings()
    if re is not None or im is not None:
        if re is None or im is None:
            raise ConfigError("give both re and im axes or neither")
        re_ax, im_ax = np.asarray(re, dtype=np.float64), np.asarray(im, dtype=np.float64)
        for ax in (re_ax, im_ax):
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise ConfigError("grid axes must be increasing 1-D arrays of length >= 2")
        return re_ax, im_ax
    resolution = settings.grid_resolution if resolution is None else resolution
    half_width = settings.grid_half_width if half_width is None else half_width
    if resolution < 2 or half_width <= 0:
        raise ConfigError(f"invalid grid: resolution {resolution}, half width {half_width}")
    ax = np.linspace(-half_width, half_width, resolution)
    return ax, ax.copy()


def _grid(
    m: MatrixLike,
    re_ax: NDArray[np.float64],
    im_ax: NDArray[np.float64],
    values: NDArray[np.float64],
    epsilons: Optional[Sequence[float]],
) -> PseudospectrumGrid:
    open_bc = isinstance(m, BandMatrix) and m.bc == BoundaryCondition.OPEN
    return PseudospectrumGrid(
        re=re_ax,
        im=im_ax,
        values=values,
        epsilons=sorted(epsilons or [1e-3, 1e-2, 1e-1]),
        label="truncation pseudospectrum" if open_bc else "pseudospectrum",
    )


def _tiles(n_im: int, n_re: int, size: int) -> List[Tuple[slice, slice]]:
    return [
        (slice(i, min(i + size, n_im)), slice(j, min(j + size, n_re)))
        for i in range(0, n_im, size)
        for j in range(0, n_re, size)
    ]


def pseudospectrum(
    m: MatrixLike,
    resolution: Optional[int] = None,
    half_width: Optional[float] = None,
    epsilons: Optional[Sequence[float]] = None,
    re: Optional[Sequence[float]] = None,
    im: Optional[Sequence[float]] = None,
) -> PseudospectrumGrid:
    """sigma_min(m - z) over a rectangular grid, default [-1.2, 1.2]^2 at 512 x 512."""
    a = _dense(m)
    re_ax, im_ax = _axes(resolution, half_width, re, im)
    nodes = re_ax[None, :] + 1j * im_ax[:, None]
    values = sigma_min_many(a, nodes.ravel()).reshape(nodes.shape)
    return _grid(m, re_ax, im_ax, values, epsilons)


async def pseudospectrum_async(
    m: MatrixLike,
    resolution: Optional[int] = None,
    half_width: Optional[float] = None,
    epsilons: Optional[Sequence[float]] = None,
    re: Optional[Sequence[float]] = None,
    im: Optional[Sequence[float]] = None,
    max_workers: Optional[int] = None,
) -> PseudospectrumGrid:
    """Tiled pseudospectrum; tiles run concurrently in worker threads."""
    settings = get_settings()
    max_workers = settings.max_workers if max_workers is None else max_workers
    a = _dense(m)
    re_ax, im_ax = _axes(resolution, half_width, re, im)
    nodes = re_ax[None, :] + 1j * im_ax[:, None]
    values = np.empty(nodes.shape)
    tiles = _tiles(len(im_ax), len(re_ax), settings.tile_size)
    semaphore = asyncio.Semaphore(max_workers)

    async def run(tile: Tuple[slice, slice]) -> None:
        async with semaphore:
            block = nodes[tile]
            values[tile] = (await asyncio.to_thread(sigma_min_many, a, block.ravel())).reshape(block.shape)

    logger.info(f"Pseudospectrum: {nodes.size} nodes in {len(tiles)} tiles")
    await asyncio.gather(*(run(t) for t in tiles))
    return _grid(m, re_ax, im_ax, values, epsilons)


def numeric_polar(m: MatrixLike) -> Tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Polar factors m = V K from the SVD, K positive semidefinite."""
    v, k = linalg.polar(_dense(m), side="right")
    return v, k


def compare_polar(polar: PolarParts, v_num: NDArray[np.complex128], k_num: NDArray[np.complex128]) -> Dict[str, float]:
    """
    Distances between numeric and analytic polar factors.

    When g = 0 the unitary factor is only determined on the range of K, so the
    V comparison is restricted to the range of P1.
    """
    k_err = float(np.linalg.norm(k_num - polar.K.data, 2))
    diff = v_num - polar.V.data
    if polar.g == 0.0:
        diff = diff @ polar.P1.data
    return {"v_error": float(np.linalg.norm(diff, 2)), "k_error": k_err}


def disc_consistency(grid: PseudospectrumGrid, g: float, eps: float) -> Tuple[bool, float]:
    """
    Check sigma_min(m - z) >= g - |z| on the nodes inside B_0(g), so the
    eps-indicator never enters B_0(g - eps - 1e-9).

    Returns:
        (passed, worst margin sigma_min - (g - |z|))
    """
    nodes = grid.nodes()
    inside = np.abs(nodes) < g
    if not inside.any():
        return True, float("inf")
    margin = np.asarray(grid.values)[inside] - (g - np.abs(nodes[inside]))
    worst = float(margin.min())
    deep = np.abs(nodes) < g - eps - 1e-9
    clean = not np.any(grid.indicator(eps) & deep)
    return bool(worst >= -1e-10 and clean), worst


def indicator_violations(
    grid: PseudospectrumGrid,
    contains: Callable[[Any], Any],
    eps: float,
    n_offsets: int = 8,
) -> int:
    """
    Number of indicator(eps) nodes lying in a region shrunk inward by eps + 1e-9.

    A node counts as deep inside when it and n_offsets points on the circle of
    radius eps + 1e-9 around it all belong to the region.
    """
    nodes = grid.nodes()[grid.indicator(eps)]
    if nodes.size == 0:
        return 0
    deep = np.asarray(contains(nodes), dtype=bool)
    ring = (eps + 1e-9) * np.exp(2j * np.pi * np.arange(n_offsets) / n_offsets)
    for w in ring:
        deep &= np.asarray(contains(nodes + w), dtype=bool)
    return int(deep.sum())
