"""
cmvband - Main Entry Point
Command line for random non-unitary CMV-type band operators: certificates,
spectra, hulls, walk dilations, figures and the acceptance self-test.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from core.acceptance import CHECKS, run_acceptance
from core.config import get_settings
from core.errors import AcceptanceFailure, CmvBandError, ConfigError
from core.export import ReportWriter, dict_table, export
from core.orchestration import ExperimentRunner, build_config, load_config
from utils.helpers import setup_logging

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

COMMANDS = ["run", "figures", "certify", "spectra", "hull", "walk"]


def _coin_document(value: str) -> Dict[str, Any]:
    """--coin takes inline JSON or a path to a JSON file."""
    path = Path(value)
    try:
        text = path.read_text(encoding="utf-8") if path.is_file() else value
        doc = json.loads(text)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"--coin is neither a JSON document nor a readable JSON file: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("--coin must be a JSON object")
    return doc


def _add_common(parser: argparse.ArgumentParser) -> None:
    coin = parser.add_argument_group("coin")
    coin.add_argument("--coin", help="Coin as inline JSON or a JSON file")
    coin.add_argument("--family", choices=["drift", "g0"], help="Two-parameter coin family")
    coin.add_argument("--xi", type=float, help="Family angle xi (radians)")
    coin.add_argument("--eta", type=float, help="Family angle eta (radians)")
    coin.add_argument("--g-check", dest="g_check", type=float, help="Expected g, checked after embedding")

    phases = parser.add_argument_group("phases")
    phases.add_argument("--phases", choices=["point", "uniform", "torus"], help="Phase distribution")
    phases.add_argument("--eps", type=float, help="Support half-width for uniform phases")
    phases.add_argument("--theta0", type=float, help="Point-mass location")
    phases.add_argument("--seed", type=int, help="Random seed")

    sizes = parser.add_argument_group("sizes")
    sizes.add_argument("--M", type=int, help="Number of two-site cells")
    sizes.add_argument("--bc", choices=["open", "periodic"], help="Boundary condition")
    sizes.add_argument("--grid", type=int, help="Pseudospectrum nodes per axis (0 disables)")
    sizes.add_argument("--lengths", type=int, nargs="+", help="Period lengths for hulls")
    sizes.add_argument("--words", type=int, help="Random words per period length")
    sizes.add_argument("--x-samples", dest="x_samples", type=int, help="Quasimomentum samples")

    regions = parser.add_argument_group("regions")
    regions.add_argument("--theta", type=float, help="Half-gap angle for figures")
    regions.add_argument("--g", type=float, help="g for figures")

    walk = parser.add_argument_group("walk")
    walk.add_argument("--graph", choices=["tree", "lattice"], help="Walk graph")
    walk.add_argument("--depth", type=int, help="Tree depth / line half-width")
    walk.add_argument("--side", type=int, help="Lattice side (odd)")
    walk.add_argument("--n-max", dest="n_max", type=int, help="Number of walk steps")

    parser.add_argument("--config", help="JSON experiment file; its keys override flags")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument(
        "--dump-matrix", dest="dump_matrix", action="store_true", default=None,
        help="spectra: write the nonzero entries of T and V as CSV",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmvband", description=__doc__.strip().splitlines()[1])
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=f"{name} experiment"))
    run = sub.choices["run"]
    run.add_argument("task", nargs="?", choices=COMMANDS[1:] + ["selftest"], help="Run a single command instead of the full pipeline")
    run.add_argument("--quick", action="store_true", help="Reduced sizes for run selftest")
    run.add_argument("--checks", nargs="+", choices=list(CHECKS), help="Subset of checks for run selftest")
    selftest = sub.add_parser("selftest", help="Run the acceptance checks")
    selftest.add_argument("--quick", action="store_true", help="Reduced problem sizes")
    selftest.add_argument("--checks", nargs="+", choices=list(CHECKS), help="Subset of checks")
    selftest.add_argument("--out", help="Output directory")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Experiment document built from the flags that were given."""
    def pick(**pairs: Any) -> Dict[str, Any]:
        return {k: v for k, v in pairs.items() if v is not None}

    doc: Dict[str, Any] = {}
    if args.command != "run":
        doc["command"] = args.command
    elif args.task is not None:
        doc["command"] = args.task
    if args.coin is not None:
        doc["coin"] = _coin_document(args.coin)
    elif args.family is not None:
        doc["coin"] = pick(family=args.family, xi=args.xi, eta=args.eta)
    sections = {
        "phases": pick(distribution=args.phases, epsilon=args.eps, theta0=args.theta0, seed=args.seed),
        "sizes": pick(
            M=args.M, bc=args.bc, grid=args.grid, lengths=args.lengths,
            words_per_length=args.words, x_samples=args.x_samples,
        ),
        "regions": pick(theta=args.theta, g=args.g),
        "walk": pick(graph=args.graph, depth=args.depth, side=args.side, n_max=args.n_max),
    }
    if doc.get("command") == "walk":
        sections["walk"]["enabled"] = True
    doc.update({k: v for k, v in sections.items() if v})
    doc.update(pick(g_check=args.g_check, output_dir=args.out, dump_matrix=args.dump_matrix))
    return doc


async def selftest(args: argparse.Namespace) -> int:
    results = await run_acceptance(quick=args.quick, names=args.checks)
    out = Path(args.out or get_settings().output_dir)
    writer = ReportWriter(out)
    await writer.write_json("acceptance.json", {"quick": args.quick, "results": [r.model_dump(mode="json") for r in results]})
    await writer.write_csv(
        "acceptance.csv",
        dict_table([{"name": r.name, "passed": r.passed, "metric": r.metric, "threshold": r.threshold} for r in results]),
    )
    failed = [r.name for r in results if not r.passed]
    for r in results:
        logger.info(f"{r.name:10s} {'PASS' if r.passed else 'FAIL'}  metric={r.metric:.3e}  threshold={r.threshold:.1e}")
    if failed:
        raise AcceptanceFailure(f"{len(failed)} acceptance check(s) failed: {', '.join(failed)}", failed)
    return 0


async def experiment(args: argparse.Namespace) -> int:
    overrides = overrides_from_args(args)
    config = await load_config(args.config, overrides) if args.config else build_config(overrides)
    runner = ExperimentRunner(config)
    bundle = await runner.run()
    out = Path(config.output_dir or get_settings().output_dir)
    bundle = await export(bundle, out)
    logger.info(f"{config.command}: {len(bundle.written)} files in {out}")
    return 0


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, settings.log_dir)
    try:
        if args.command == "selftest" or getattr(args, "task", None) == "selftest":
            return await selftest(args)
        return await experiment(args)
    except CmvBandError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    """Entry point for the application."""
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Interrupted")
        sys.exit(130)
