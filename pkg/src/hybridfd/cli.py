"""``hybridfd`` command line.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load
from .linalg import SingularMatrixError
from .stencil import AugmentationError, ConditioningError

log = logging.getLogger("hybridfd")

NUMERICAL_ERRORS = (ConditioningError, SingularMatrixError, AugmentationError, np.linalg.LinAlgError, FloatingPointError)


def _run(args) -> int:
    from .experiments import run

    cfg = load(args.config)
    try:
        report = run(cfg, plots=not args.no_plots)
    except NUMERICAL_ERRORS as exc:
        node = getattr(exc, "node", None)
        log.error("numerical failure%s: %s", f" at node {node}" if node is not None else "", exc)
        return 3
    except RuntimeError as exc:
        if isinstance(exc.__cause__, NUMERICAL_ERRORS):
            log.error("numerical failure: %s", exc)
            return 3
        raise
    print(json.dumps({"output": str(cfg.output), "metrics": report.metrics, "phases": report.phases}, default=str, indent=2))
    return 0


def _validate(args) -> int:
    cfg = load(args.config)
    print(f"ok: {cfg.experiment} -> {cfg.output}")
    return 0


def _export(args) -> int:
    from .plotting import render

    d = Path(args.report_dir)
    if not (d / "report.json").exists():
        log.error("%s has no report.json", d)
        return 2
    for name in render(d):
        print(d / name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridfd", description="RBF-FD experiments with the hybrid Gaussian-cubic kernel")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    r.set_defaults(func=_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_validate)
    e = sub.add_parser("export-plots", help="render PNGs for an existing run directory")
    e.add_argument("report_dir")
    e.set_defaults(func=_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
