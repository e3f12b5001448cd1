"""
Report export: JSON reports, CSV tables and SVG figures.

All files of a run go through one ReportWriter after the computation has
finished. Output bytes depend only on the inputs: CSV floats use repr, JSON
keys are sorted and SVGs carry a fixed hash salt and no date.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import aiofiles
import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.figure import Figure
from numpy.typing import NDArray

from core.config import get_settings
from core.errors import ConfigError, OutputError
from core.models import Certificate, DecayReport, PseudospectrumGrid, ReportBundle
from core.regions import circle_polyline, region_boundary
from utils.helpers import format_float, get_output_path, to_jsonable

logger = logging.getLogger(__name__)

Row = Sequence[Any]
EXPORT_FORMATS = ("json", "csv", "svg")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def csv_text(rows: Iterable[Row]) -> str:
    """Rows (header first) as CSV text with '\\n' line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _parse_cell(text: str) -> Any:
    if text in ("true", "false"):
        return text == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_csv(text: str) -> List[List[Any]]:
    """Inverse of csv_text: numbers and booleans are converted back."""
    return [[_parse_cell(c) for c in row] for row in csv.reader(io.StringIO(text))]


def json_text(data: Any) -> str:
    if hasattr(data, "model_dump"):
        data = data.model_dump(mode="json")
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"


def svg_text(fig: Figure, hashsalt: Optional[str] = None) -> str:
    """Render a figure to SVG text reproducibly."""
    salt = get_settings().svg_hashsalt if hashsalt is None else hashsalt
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": salt}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def points_table(points: NDArray[np.complex128], extra: Optional[Dict[str, Any]] = None) -> List[List[Any]]:
    """Header plus (re, im[, extra columns]) rows."""
    extra = extra or {}
    header = ["re", "im", *extra.keys()]
    rows: List[List[Any]] = [header]
    for z in np.ravel(points):
        rows.append([float(z.real), float(z.imag), *extra.values()])
    return rows


def grid_table(grid: PseudospectrumGrid) -> List[List[Any]]:
    rows: List[List[Any]] = [["re", "im", "sigma_min"]]
    values = np.asarray(grid.values)
    for i, y in enumerate(grid.im):
        for j, x in enumerate(grid.re):
            rows.append([float(x), float(y), float(values[i, j])])
    return rows


def dict_table(records: Sequence[Dict[str, Any]]) -> List[List[Any]]:
    """Header from the first record's keys, in insertion order."""
    if not records:
        return [[]]
    header = list(records[0].keys())
    return [header] + [[r[k] for k in header] for r in records]


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _complex_plane(title: str, half_width: float = 1.3) -> Tuple[Figure, Any]:
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_aspect("equal")
    ax.set_xlim(-half_width, half_width)
    ax.set_ylim(-half_width, half_width)
    ax.axhline(0.0, color="0.85", lw=0.5)
    ax.axvline(0.0, color="0.85", lw=0.5)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    return fig, ax


def _circles(ax: Any, g: float) -> None:
    """Unit circle and g S in red."""
    for r in (1.0, g):
        if r > 0:
            c = circle_polyline(0.0, r, 720)
            ax.plot(c.real, c.imag, color="red", lw=1.0)


def region_figure(certificate: Certificate, title: str = "certified resolvent regions") -> Figure:
    fig, ax = _complex_plane(title)
    cycle = ["tab:blue", "tab:green", "tab:purple", "tab:orange", "tab:brown", "tab:olive"]
    for k, region in enumerate(certificate.regions):
        color = cycle[k % len(cycle)]
        for line in region_boundary(region):
            ax.plot(line.real, line.imag, color=color, lw=1.2, label=region.label)
    _circles(ax, certificate.g)
    handles, labels = ax.get_legend_handles_labels()
    seen: Dict[str, Any] = {}
    for h, lab in zip(handles, labels):
        seen.setdefault(lab, h)
    if seen:
        ax.legend(list(seen.values()), list(seen.keys()), loc="upper right", fontsize=7)
    return fig


def form_figure(theta: float, g: float, boundaries: List[NDArray[np.complex128]], title: str) -> Figure:
    """D(theta) u B_0(g) u R_1(theta) outlines over S and g S."""
    fig, ax = _complex_plane(title, half_width=1.6)
    for line in boundaries:
        ax.plot(line.real, line.imag, color="tab:blue", lw=1.2)
    x = np.cos(theta)
    ax.plot([x, x], [-1.6, 1.6], color="tab:blue", lw=1.0, ls="--")
    _circles(ax, g)
    return fig


def spectrum_figure(
    clouds: Dict[str, NDArray[np.complex128]],
    title: str,
    g: Optional[float] = None,
    annulus: Optional[Tuple[float, float]] = None,
) -> Figure:
    fig, ax = _complex_plane(title)
    for label in sorted(clouds):
        pts = np.ravel(clouds[label])
        ax.scatter(pts.real, pts.imag, s=1.0, label=label, rasterized=False)
    if annulus is not None:
        for r in annulus:
            c = circle_polyline(0.0, r, 720)
            ax.plot(c.real, c.imag, color="black", lw=0.8, ls=":")
    if g is not None:
        _circles(ax, g)
    if clouds:
        ax.legend(loc="upper right", fontsize=7, markerscale=6)
    return fig


def pseudospectrum_figure(grid: PseudospectrumGrid, g: Optional[float] = None) -> Figure:
    fig, ax = _complex_plane(grid.label, half_width=float(max(np.max(np.abs(grid.re)), np.max(np.abs(grid.im)))))
    levels = np.log10(sorted(grid.epsilons))
    values = np.log10(np.maximum(np.asarray(grid.values), np.finfo(float).tiny))
    cs = ax.contour(grid.re, grid.im, values, levels=levels, cmap="viridis")
    ax.clabel(cs, fmt="%.0f", fontsize=6)
    if g is not None:
        _circles(ax, g)
    return fig


def decay_figure(report: DecayReport) -> Figure:
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(1, 1, 1)
    mags = np.abs(np.asarray(report.sequence))
    n = np.arange(mags.size)
    ax.semilogy(n, np.maximum(mags, 1e-300), "o-", label="|<psi, U^n psi>|")
    if report.rate_bound is not None and report.constant is not None:
        ax.semilogy(n, report.constant * report.rate_bound ** n, "--", label=f"C ({report.rate_bound:.4f})^n")
    ax.set_xlabel("n")
    ax.legend(fontsize=7)
    return fig


# ---------------------------------------------------------------------------
# writer
# ---------------------------------------------------------------------------

class ReportWriter:
    """Single writer for a report directory."""

    def __init__(self, output_dir: Union[str, Path], hashsalt: Optional[str] = None):
        self.output_dir = Path(output_dir)
        self.hashsalt = hashsalt

    async def _write(self, name: str, text: str) -> Path:
        try:
            path = get_output_path(self.output_dir, name)
            async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
                await f.write(text)
        except OSError as e:
            logger.error(f"Failed to write {name} to {self.output_dir}: {e}")
            raise OutputError(f"cannot write {name} to {self.output_dir}: {e}") from e
        logger.debug(f"Wrote {path}")
        return path

    async def write_json(self, name: str, data: Any) -> Path:
        return await self._write(name, json_text(data))

    async def write_csv(self, name: str, rows: Iterable[Row]) -> Path:
        return await self._write(name, csv_text(rows))

    async def write_svg(self, name: str, fig: Figure) -> Path:
        return await self._write(name, svg_text(fig, self.hashsalt))

    async def write_bundle(self, bundle: ReportBundle, formats: Optional[Sequence[str]] = None) -> ReportBundle:
        """
        Write report.json, every table and every figure, in sorted name order.

        Args:
            bundle: Report, tables and figures to write
            formats: Subset of "json", "csv", "svg"; all of them when omitted

        Returns:
            The bundle with `written` listing the files relative to the output directory
        """
        chosen = set(EXPORT_FORMATS if formats is None else formats)
        unknown = chosen - set(EXPORT_FORMATS)
        if unknown:
            raise ConfigError(f"Unknown export format(s): {', '.join(sorted(unknown))}")
        written: List[str] = []
        if "json" in chosen:
            path = await self.write_json("report.json", bundle.report)
            written.append(path.name)
        if "csv" in chosen:
            for name in sorted(bundle.tables):
                path = await self.write_csv(f"{name}.csv", bundle.tables[name])
                written.append(path.name)
        if "svg" in chosen:
            for name in sorted(bundle.figures):
                path = await self.write_svg(f"{name}.svg", bundle.figures[name])
                written.append(path.name)
        logger.info(f"Wrote {len(written)} files to {self.output_dir}")
        return bundle.model_copy(update={"written": written})


async def export(
    bundle: ReportBundle,
    output_dir: Union[str, Path],
    formats: Optional[Sequence[str]] = None,
    hashsalt: Optional[str] = None,
) -> ReportBundle:
    """Write a report bundle to `output_dir` through a single ReportWriter."""
    return await ReportWriter(output_dir, hashsalt).write_bundle(bundle, formats)
