# rhlab/cli.py
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .artifact import verify
from .errors import LabError
from .explainer import BANNER
from .pipeline import AuditPipeline
from .plots import emit_plots
from .scenario import Scenario, list_presets, load_preset, parse_scenario, scenario_hash, with_overrides

logger = logging.getLogger("rhlab")


def _load_scenario(ref: str) -> Scenario:
    """A path to a scenario file, or the name of a bundled preset."""
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path)
    return load_preset(ref)


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = with_overrides(_load_scenario(args.scenario), p=args.p, resolution=args.resolution, tmax=args.tmax)
    logger.info("running %s [%s]", scenario.name, scenario_hash(scenario)[:12])
    res = AuditPipeline().run(scenario, args.out)
    print(res.text)
    if not res.ok:
        print(f"STOP ({res.guard_code}): {res.reason}")
    if res.artifact is not None:
        print(f"artifact: {res.artifact.directory} ({res.status})")
    return 0 if res.ok else 1


def _cmd_verify(args: argparse.Namespace) -> int:
    res = verify(args.artifact)
    if res.ok:
        print(f"verify {args.artifact}: PASS")
        return 0
    print(f"verify {args.artifact}: FAIL [{res.guard_code}] {res.failed}: {res.reason}")
    return 1


def _cmd_plots(args: argparse.Namespace) -> int:
    written = emit_plots(args.artifact)
    for path in written:
        print(path)
    return 0


def _cmd_presets(args: argparse.Namespace) -> int:
    print(BANNER)
    print("Bundled scenarios")
    print(BANNER)
    for path in list_presets():
        s = parse_scenario(path)
        print(f"  {s.name:<20} dim={s.grid.dim} N={s.resolutions[0]:<4} metric={s.metric.kind.value:<10} "
              f"T={s.flow.tmax:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhlab", description="Ricci-harmonic flow estimate audits on flat tori")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evolve a scenario, audit it and write an artifact")
    p_run.add_argument("--scenario", required=True, help="scenario file or bundled preset name")
    p_run.add_argument("--out", required=True, help="artifact directory")
    p_run.add_argument("--p", type=float, default=None, help="override monitor.p")
    p_run.add_argument("--resolution", type=int, default=None, help="override grid.resolution (all axes)")
    p_run.add_argument("--tmax", type=float, default=None, help="override flow.tmax")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="re-check an artifact without re-simulating")
    p_verify.add_argument("--artifact", required=True)
    p_verify.set_defaults(func=_cmd_verify)

    p_plots = sub.add_parser("plots", help="write TSV series and SVG plots for an artifact")
    p_plots.add_argument("--artifact", required=True)
    p_plots.set_defaults(func=_cmd_plots)

    p_presets = sub.add_parser("presets", help="list bundled scenarios")
    p_presets.set_defaults(func=_cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LabError as err:
        print(f"STOP ({err.guard_code}): {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
