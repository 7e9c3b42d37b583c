"""Command-line convergence studies.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 rate check failed (only with ``--verify``).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError, WGError
from .study import StudyConfig, check_rates, emit, parse_levels, run_study

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RATES = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfwg", description="Stabilizer-free weak Galerkin convergence study.")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dim", type=int)
    p.add_argument("--family", choices=["quad", "quadhex", "wedge"])
    p.add_argument("--k", type=int)
    p.add_argument("--levels", help="level range a:b")
    p.add_argument("--solution", help="sine2d, sine3d or poly:m")
    p.add_argument("--solver", choices=["direct", "cg", "auto"])
    p.add_argument("--tol", type=float)
    p.add_argument("--no-condense", dest="condense", action="store_const", const=False)
    p.add_argument("--out", help="write the table here instead of stdout")
    p.add_argument("--format", choices=["markdown", "csv"])
    p.add_argument("--export-vtk", help="VTK path stem for u_0 cell averages per level")
    p.add_argument("--verify", action="store_const", const=True,
                   help="exit with code 4 unless the finest-level rates hit their targets")
    p.add_argument("--lambda-check", action="store_const", const=True,
                   help="sample every weak-gradient space and fail on constraint residuals above 1e-9")
    p.add_argument("--experimental", action="store_const", const=True, help="allow k > 3")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("config", "verbose") and v is not None}
    try:
        if "levels" in overrides:
            overrides["levels"] = parse_levels(overrides["levels"])
        if args.config:
            config = StudyConfig.from_json(args.config, **overrides)
        else:
            config = StudyConfig.from_dict(overrides)
        report = run_study(config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WGError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    try:
        text = emit(report, config.format, config.out)
    except OSError as exc:
        print(f"cannot write {config.out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if config.out is None:
        sys.stdout.write(text)
    if config.verify and not check_rates(report):
        print("rate check failed", file=sys.stderr)
        return EXIT_RATES
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
