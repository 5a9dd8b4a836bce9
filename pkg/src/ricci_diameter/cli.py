"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical hard error,
4 run ended at a singularity (outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ricci_diameter.constants import ConstantsError
from ricci_diameter.distance import DistanceError
from ricci_diameter.flow import FlowError
from ricci_diameter.geometry import ProfileError
from ricci_diameter.heat import HeatError
from ricci_diameter.scenario import ScenarioError, load_scenario, run, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SINGULAR = 4

STAGES = {
    "simulate": (),
    "constants": ("constants",),
    "audit": ("constants", "audit", "heat"),
    "heatmass": ("heat",),
    "report": ("constants", "audit", "heat"),
}

log = logging.getLogger("ricci_diameter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ricci-diameter",
        description="Ricci flow on rotationally symmetric spheres and audits of diameter bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "evolve the flow; write trajectory.csv and snapshots",
        "constants": "evolve and compute Sobolev/Yamabe/F-entropy constants per audited snapshot",
        "audit": "run every audit and write per-inequality CSVs and summary.json",
        "heatmass": "evolve the heat kernel and check its mass bound",
        "report": "full run plus SVG figures",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="scenario JSON file")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config output_dir)")
        p.add_argument("--grid", type=int, default=None, help="override the meridian grid size")
        p.add_argument("--seed", type=int, default=0, help="reserved; all algorithms are deterministic")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        sc = load_scenario(args.config)
        if args.grid is not None:
            sc = sc.with_grid(args.grid)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or (Path(sc.output_dir) if sc.output_dir else Path("out") / sc.name)
    try:
        res = run(sc, STAGES[args.command])
        paths = write_outputs(res, out, figures=args.command == "report")
    except (FlowError, HeatError, ConstantsError, DistanceError, ProfileError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        log.info("wrote %s", p)
    if res.singular:
        ev = res.trajectory.event or {}
        print(f"singularity ({ev.get('kind')}) at t={ev.get('time'):.6g}; outputs in {out}", file=sys.stderr)
        return EXIT_SINGULAR
    print(f"outputs in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
