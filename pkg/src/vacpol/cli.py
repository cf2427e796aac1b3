"""Command-line entry point: vacpol {density,decompose,extrapolate,flow,report,all}.

Exit codes: 0 success, 2 invalid configuration or missing input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .decomp import CoarseGridError, DecompositionError, NoSpikeError
from .extrapolation import ExtrapolationError
from .pipeline import (ConfigError, RunConfig, load_config, stage_decompose, stage_density,
                       stage_extrapolate, stage_flow, stage_report)
from .specfun import SpecialFunctionError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_NUMERIC_ERRORS = (DecompositionError, ExtrapolationError, SpecialFunctionError, NoSpikeError,
                   CoarseGridError, FloatingPointError, ArithmeticError)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vacpol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"vacpol {__version__}")
    p.add_argument("-c", "--config", help="INI configuration file")
    p.add_argument("-o", "--out", help="output directory (overrides [output] dir)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("density", help="spectral density on [a, b]")
    d.add_argument("--Z", type=int)
    d.add_argument("--K", type=int)
    d.add_argument("--M-lambda", type=int, dest="M_lambda")
    d.add_argument("--lambda", type=float, nargs="+", dest="lambdas")
    d.add_argument("--lambda0", type=float, nargs="+", dest="lambda0s")
    d.add_argument("--n-points", type=int, dest="n_points")
    d.add_argument("--workers", type=int)
    d.add_argument("--full", action="store_true", help="full profile: K=55, M_lambda=11")

    dc = sub.add_parser("decompose", help="Laplace-domain decomposition of every density")
    dc.add_argument("--tol", type=float)
    dc.add_argument("--max-frequencies", type=int, dest="max_frequencies")

    sub.add_parser("extrapolate", help="Lambda0 -> infinity extrapolation of w5")

    f = sub.add_parser("flow", help="integrate the dilated flow of nu5")
    f.add_argument("--spectrum", help="CSV with columns n, p_n (default: bundled uranium)")
    f.add_argument("--intervals", type=int)
    f.add_argument("--coulomb", action="store_true", help="analytic one-electron spectrum")
    f.add_argument("--fit", dest="fit_source", help="'published', 'extrapolated' or a fit JSON path")

    sub.add_parser("report", help="summary table and plot data")
    sub.add_parser("all", help="density, decompose, extrapolate, flow (atom and ion), report")
    return p


def _config(args) -> RunConfig:
    overrides = list(args.set)
    if args.out:
        overrides.append(f"output.dir={args.out}")
    cfg = load_config(args.config, overrides)
    mapping = {
        "Z": ("physics", "z"), "K": ("physics", "k"), "M_lambda": ("physics", "m_lambda"),
        "n_points": ("density", "n_points"), "workers": ("density", "workers"),
        "tol": ("decompose", "tol"), "max_frequencies": ("decompose", "max_frequencies"),
        "spectrum": ("flow", "spectrum"), "intervals": ("flow", "intervals"),
        "fit_source": ("fit", "source"),
    }
    for name, (section, key) in mapping.items():
        val = getattr(args, name, None)
        if val is not None:
            cfg.apply(section, key, val)
    for name, key in (("lambdas", "lambda"), ("lambda0s", "lambda0")):
        val = getattr(args, name, None)
        if val:
            cfg.apply("physics", key, val)
    if getattr(args, "full", False):
        cfg.apply("physics", "k", 55)
        cfg.apply("physics", "m_lambda", 11)
    if getattr(args, "coulomb", False):
        cfg.apply("flow", "coulomb", True)
    return cfg.validate()


def _run(cfg: RunConfig, command: str) -> list:
    if command == "all":
        out = []
        for stage in (stage_density, stage_decompose, stage_extrapolate):
            out += stage(cfg).paths
        for coulomb in (False, True):
            cfg.coulomb = coulomb
            out += stage_flow(cfg).paths
        cfg.coulomb = False
        return out + stage_report(cfg).paths
    stage = {"density": stage_density, "decompose": stage_decompose,
             "extrapolate": stage_extrapolate, "flow": stage_flow, "report": stage_report}[command]
    res = stage(cfg)
    if command == "density":
        print(f"density: {res.computed} computed, {res.cache_hits} from cache")
    return res.paths


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        paths = _run(cfg, args.command)
    except ConfigError as exc:
        print(f"vacpol: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"vacpol: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"vacpol: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"vacpol: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    if args.command in ("flow", "all"):
        for p in paths:
            if p.name.startswith("flow_") and p.suffix == ".json":
                d = json.loads(p.read_text())
                print(f"{d['label']}: nu5={d['nu5_report']:.6g} "
                      f"nu5-remainder={d['nu5_minus_remainder_report']:.6g} "
                      f"density(r=1)={d['density_r1_report']:.4g}")
    if args.command in ("report", "all"):
        print((cfg.out / "report.txt").read_text(), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
