"""``sigma2lab`` command line.

Exit codes: 0 when every verdict passes, 2 on a numerical verdict
failure, 1 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..isoperimetry import NotStarShapedError, SearchBoundaryError
from ..levelset.coarea import EmptyBinsError, LocalGraphError, SingularFractionError
from ..levelset.identities import WidenBinsError
from .config import KINDS, SOURCES, ConfigError, Scenario
from .scenarios import ScheduleError, run

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

log = logging.getLogger("sigma2lab")

#: errors that mean the scenario cannot be run as configured
_USAGE_ERRORS = (ConfigError, ScheduleError, WidenBinsError, EmptyBinsError, LocalGraphError,
                 SingularFractionError, NotStarShapedError, SearchBoundaryError)


def _betas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario TOML file; explicit flags override it")
    p.add_argument("--betas", type=_betas, help="comma-separated cone parameters, e.g. -0.5,-0.5")
    p.add_argument("--resolution", type=int, help="lattice points per axis")
    p.add_argument("--domain-radius", type=float, help="half side of the lattice cube")
    p.add_argument("--bins", type=int, help="number of levels")
    p.add_argument("--seed", type=int, help="seed for random families and sampling")
    p.add_argument("--out-dir", help="directory for CSV, JSON and SVG outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigma2lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        _common(p)
        if kind == "levelset-verify":
            p.add_argument("--source", choices=SOURCES)
            p.add_argument("--path", choices=("grid", "analytic"))
            p.add_argument("--field-file", help="sampled field saved by SampledGridField.save")
            p.add_argument("--index", type=int, help="member of the perturbed family")
        elif kind == "boundary-sequence":
            p.add_argument("--eps0", type=float)
            p.add_argument("--length", type=int)
            p.add_argument("--index", type=int, help="tracked marked point (1-based)")
            p.add_argument("--schedule", choices=("harmonic", "constant"))
        elif kind == "isoperimetry":
            p.add_argument("--log2-samples", type=int, help="base-2 log of the Sobol sample count")
            p.add_argument("--random-sets", type=int)
    return parser


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    s = Scenario.load(args.config) if args.config else Scenario(kind=args.kind)
    if s.kind != args.kind:
        raise ConfigError(f"config describes a {s.kind!r} scenario, not {args.kind!r}")
    a = vars(args)
    changes = {
        "betas": a.get("betas"),
        "seed": a.get("seed"),
        "out_dir": a.get("out_dir"),
        "grid__resolution": a.get("resolution"),
        "grid__domain_radius": a.get("domain_radius"),
        "grid__bins": a.get("bins"),
    }
    if args.kind == "levelset-verify":
        changes.update(levelset__source=a.get("source"), levelset__path=a.get("path"),
                       levelset__field_file=a.get("field_file"), levelset__index=a.get("index"))
        if a.get("field_file") and not a.get("source"):
            changes["levelset__source"] = "file"
    elif args.kind == "boundary-sequence":
        changes.update(sequence__eps0=a.get("eps0"), sequence__length=a.get("length"),
                       sequence__index=a.get("index"), sequence__schedule=a.get("schedule"))
    elif args.kind == "isoperimetry":
        changes.update(isoperimetry__log2_samples=a.get("log2_samples"),
                       isoperimetry__random_sets=a.get("random_sets"))
    return s.updated(**changes)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        s = scenario_from_args(args)
        result = run(s)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    s.save(Path(s.out_dir) / "scenario.toml")
    for name, ok in result.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for f in result.files:
        log.info("wrote %s", f)
    return EXIT_OK if result.passed else EXIT_FAILED
