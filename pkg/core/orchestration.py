"""
Orchestration for cmvband.
Turns a validated experiment configuration into a report bundle: builds the
operators, runs the sweeps concurrently and collects tables and figures for
the single report writer.
"""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import aiofiles
import numpy as np
from pydantic import ValidationError

from core.bandop import (
    build_polar,
    build_T,
    classify_structure,
    realize_phases,
    tridiag_blocks,
)
from core.coin import coin_from_document
from core.config import Settings, get_settings
from core.errors import ConfigError
from core.export import (
    decay_figure,
    dict_table,
    form_figure,
    grid_table,
    points_table,
    pseudospectrum_figure,
    region_figure,
    spectrum_figure,
)
from core.models import (
    BoundaryCondition,
    ExperimentConfig,
    GraphKind,
    PhaseDistribution,
    PhaseField,
    RegionVariant,
    ReportBundle,
    UnitaryEmbedding,
)
from core.regions import (
    certificate_summary,
    certified_resolvent,
    delta_boundary,
    form_boundary,
    split_predicate,
)
from core.spectra import (
    compare_polar,
    disc_consistency,
    eigvals,
    indicator_violations,
    numeric_polar,
    pseudospectrum_async,
)
from core.symbol import default_grid, ergodic_hull, ti_spectrum, v_symbol_arcs
from core.walk import autocorrelation_decay, decay_table, dilation_check, escape_check

logger = logging.getLogger(__name__)


async def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read a JSON experiment file. Keys in the file win over `overrides`
    (the command-line flags); nested sections are merged key by key.

    Raises:
        ConfigError: On unreadable files, invalid JSON or schema violations
    """
    try:
        async with aiofiles.open(path, "r", encoding="utf-8") as f:
            doc = json.loads(await f.read())
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to read config {path}: {e}")
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return build_config(merge_documents(overrides or {}, doc))


def merge_documents(base: Dict[str, Any], top: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_documents(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_config(doc: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def _support_half_width(cfg: ExperimentConfig) -> float:
    """Half-width of a centred interval holding the phase support."""
    p = cfg.phases
    if p.distribution == PhaseDistribution.TORUS:
        return float(np.pi)
    if p.distribution == PhaseDistribution.POINT:
        return float(min(abs(p.theta0), np.pi))
    return float(min(p.epsilon, np.pi))


def _phase_field(cfg: ExperimentConfig) -> PhaseField:
    p = cfg.phases
    return PhaseField(distribution=p.distribution, epsilon=p.epsilon, theta0=p.theta0, seed=p.seed)


class ExperimentRunner:
    """
    Runs one experiment configuration.

    Each command fills a ReportBundle; `run` executes every enabled section
    concurrently and merges them in a fixed order.
    """

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self._emb: Optional[UnitaryEmbedding] = None

    # -- shared pieces -------------------------------------------------------

    @property
    def embedding(self) -> UnitaryEmbedding:
        if self._emb is None:
            if self.config.coin is None:
                raise ConfigError("this command needs a coin (--coin or --family)")
            emb = coin_from_document(self.config.coin)
            if self.config.g_check is not None and abs(emb.g - self.config.g_check) > 1e-9:
                raise ConfigError(f"coin has g = {emb.g:.12g}, expected {self.config.g_check:.12g}")
            self._emb = emb
        return self._emb

    def _coin_report(self) -> Dict[str, Any]:
        emb = self.embedding
        return {
            "embedding": emb.model_dump(mode="json"),
            "g": emb.g,
            "chi": emb.chi,
            "structure": classify_structure(emb).model_dump(mode="json"),
        }

    def _xgrid(self) -> np.ndarray:
        return default_grid(self.config.sizes.x_samples)

    # -- commands ------------------------------------------------------------

    def figures(self) -> ReportBundle:
        """Outline of D(theta) u B_0(g) u R_1(theta) and of B_0(g) u Delta_g(theta)."""
        r = self.config.regions
        if r.theta is None or r.g is None:
            raise ConfigError("figures needs --theta and --g")
        theta, g = r.theta, r.g
        outline = form_boundary(theta, g, r.boundary_points)
        triangle = delta_boundary(theta, g)
        ok, margin = split_predicate(theta, g)
        rows: List[List[Any]] = [["curve", "re", "im"]]
        for k, line in enumerate(outline):
            rows += [[f"form{k}", float(z.real), float(z.imag)] for z in line]
        rows += [["delta", float(z.real), float(z.imag)] for z in triangle]
        report = {
            "command": "figures",
            "theta": theta,
            "g": g,
            "cubic_defined": theta < np.pi / 2,
            "segment_covered": ok,
            "split_margin": margin,
        }
        figures = {
            "form_region": form_figure(theta, g, outline, f"D(theta) u B0(g) u R1(theta), theta={theta:g}, g={g:g}"),
            "delta_region": form_figure(theta, g, [triangle], f"B0(g) u Delta_g(theta), theta={theta:g}, g={g:g}"),
        }
        report["regions"] = [
            {"variant": RegionVariant.FORM.value, "params": {"theta": theta, "g": g}},
            {"variant": RegionVariant.TRIANGLE.value, "params": {"theta": theta, "g": g}},
        ]
        return ReportBundle(report=report, tables={"region_boundaries": rows}, figures=figures)

    def certify(self) -> ReportBundle:
        emb = self.embedding
        eps = _support_half_width(self.config)
        xgrid = self._xgrid()
        cert = certified_resolvent(emb, eps, xgrid=xgrid)
        report: Dict[str, Any] = {"command": "certify", **self._coin_report(), "certificate": certificate_summary(cert)}
        if cert.g < 1.0 - self.settings.unitary_g_cutoff:
            report["blocks"] = tridiag_blocks(emb).model_dump(mode="json")
        report["v_arcs"] = [list(a) for a in v_symbol_arcs(emb, xgrid)]
        gaps = dict_table([gap.model_dump() for gap in cert.gaps]) if cert.gaps else [["theta", "rotation"]]
        return ReportBundle(
            report=report,
            tables={"gaps": gaps},
            figures={"certificate": region_figure(cert, f"certificate, eps={eps:g}")},
        )

    async def spectra(self) -> ReportBundle:
        """Eigenvalues, polar check and (optionally) the pseudospectrum of one realization."""
        cfg = self.config
        emb = self.embedding
        M, bc = cfg.sizes.M, cfg.sizes.bc
        p = cfg.phases
        phases = realize_phases(p.distribution, p.epsilon, p.seed, M, p.theta0)
        t_mat = build_T(emb, phases, M, bc)
        spec = await asyncio.to_thread(eigvals, t_mat, None, True)
        polar = build_polar(emb, phases, M, bc)
        v_num, k_num = await asyncio.to_thread(numeric_polar, t_mat)

        report: Dict[str, Any] = {
            "command": "spectra",
            **self._coin_report(),
            "M": M,
            "bc": bc.value,
            "manifest": t_mat.manifest,
            "polar_residual": polar.residual,
            "polar_numeric": compare_polar(polar, v_num, k_num),
            "max_eig_residual": float(np.max(spec.residuals)) if spec.residuals is not None and spec.residuals.size else 0.0,
            "spectral_radius": float(np.max(np.abs(spec.eigenvalues))),
            "min_modulus": float(np.min(np.abs(spec.eigenvalues))),
        }
        tables = {"eigenvalues": points_table(spec.eigenvalues)}
        figures = {"eigenvalues": spectrum_figure({"T": spec.eigenvalues}, f"eigenvalues, M={M}, {bc.value}", g=emb.g)}
        if cfg.dump_matrix:
            header = [["row", "col", "re", "im"]]
            tables["matrix_T"] = header + [list(r) for r in t_mat.to_rows()]
            tables["matrix_V"] = header + [list(r) for r in polar.V.to_rows()]

        if cfg.sizes.grid:
            grid = await pseudospectrum_async(
                t_mat,
                resolution=cfg.sizes.grid,
                half_width=cfg.sizes.grid_half_width,
                epsilons=cfg.sizes.epsilons,
            )
            tables["pseudospectrum"] = grid_table(grid)
            figures["pseudospectrum"] = pseudospectrum_figure(grid, g=emb.g)
            if bc == BoundaryCondition.PERIODIC:
                eps = min(grid.epsilons)
                ok, worst = disc_consistency(grid, emb.g, eps)
                cert = certified_resolvent(emb, _support_half_width(cfg), xgrid=self._xgrid())
                report["pseudospectrum"] = {
                    "disc_consistent": ok,
                    "disc_margin": worst,
                    "indicator_in_certificate": indicator_violations(grid, cert.contains, eps),
                }
        return ReportBundle(report=report, tables=tables, figures=figures)

    def hull(self) -> ReportBundle:
        cfg = self.config
        emb = self.embedding
        xgrid = self._xgrid()
        hull = ergodic_hull(
            emb,
            lmax=max(cfg.sizes.lengths),
            words_per_l=cfg.sizes.words_per_length,
            xgrid=xgrid,
            seed=cfg.phases.seed,
            phases=_phase_field(cfg),
        )
        ti = ti_spectrum(emb, xgrid)
        rows: List[List[Any]] = [["l", "re", "im"]]
        for ell in sorted(hull.by_length):
            rows += [[ell, float(z.real), float(z.imag)] for z in np.ravel(hull.by_length[ell])]
        report = {
            "command": "hull",
            **self._coin_report(),
            "distribution": hull.distribution.value,
            "l_max": hull.l_max,
            "words_per_length": hull.words_per_length,
            "x_samples": hull.x_samples,
            "annulus": list(hull.annulus) if hull.annulus else None,
            "contains_origin": hull.contains_origin,
            "exact": hull.exact,
            "points": int(np.size(hull.points)),
        }
        clouds = {f"l={ell}": hull.by_length[ell] for ell in hull.by_length}
        clouds["translation invariant"] = ti.points()
        return ReportBundle(
            report=report,
            tables={"hull": rows, "ti_spectrum": points_table(ti.points())},
            figures={"hull": spectrum_figure(clouds, f"periodic approximants, {hull.distribution.value}", emb.g, hull.annulus)},
        )

    def walk(self) -> ReportBundle:
        cfg = self.config
        w = cfg.walk
        emb = self.embedding
        phases = _phase_field(cfg)
        side = w.side if w.graph == GraphKind.LATTICE else None
        deviation = dilation_check(emb, phases, w.n_max, w.depth, w.graph, side, w.theta)
        escape = escape_check(emb, phases, w.n_max, w.depth, w.graph, side, w.theta)
        decay = autocorrelation_decay(emb, phases, w.n_max, w.depth, w.graph, side, w.theta)
        report = {
            "command": "walk",
            **self._coin_report(),
            "graph": w.graph.value,
            "depth": w.depth,
            "side": side,
            "n_max": w.n_max,
            "dilation_deviation": deviation,
            "escape_deviation": escape,
            "decay": {
                "certified": decay.certified,
                "rate_bound": decay.rate_bound,
                "constant": decay.constant,
                "passed": decay.passed,
            },
        }
        return ReportBundle(
            report=report,
            tables={"autocorrelation": dict_table(decay_table(decay))},
            figures={"autocorrelation": decay_figure(decay)},
        )

    # -- entry points ----------------------------------------------------------

    async def run(self) -> ReportBundle:
        """Execute the configured command and return the bundle."""
        command = self.config.command
        logger.info(f"Running {command}")
        if command == "figures":
            return await asyncio.to_thread(self.figures)
        if command == "certify":
            return await asyncio.to_thread(self.certify)
        if command == "spectra":
            return await self.spectra()
        if command == "hull":
            return await asyncio.to_thread(self.hull)
        if command == "walk":
            return await asyncio.to_thread(self.walk)
        return await self.run_all()

    async def run_all(self) -> ReportBundle:
        """Every enabled section, computed concurrently, merged in a fixed order."""
        _ = self.embedding
        sections: Dict[str, Any] = {
            "spectra": self.spectra(),
            "hull": asyncio.to_thread(self.hull),
        }
        if self.config.regions.enabled:
            sections["certify"] = asyncio.to_thread(self.certify)
        if self.config.regions.theta is not None and self.config.regions.g is not None:
            sections["figures"] = asyncio.to_thread(self.figures)
        if self.config.walk.enabled:
            sections["walk"] = asyncio.to_thread(self.walk)

        names = list(sections)
        results = await asyncio.gather(*sections.values())
        merged = ReportBundle(report={"command": "run", "config": self.config.model_dump(mode="json")})
        for name in sorted(names):
            bundle = results[names.index(name)]
            merged.report[name] = bundle.report
            merged.tables.update({f"{name}_{k}": v for k, v in bundle.tables.items()})
            merged.figures.update({f"{name}_{k}": v for k, v in bundle.figures.items()})
        return merged
