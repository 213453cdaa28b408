"""Command line entry point: ``knwidth <stage> [--config F] [--out D] ...``.

Every stage subcommand runs the pipeline up to that stage, reusing cached
results in the output directory.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .decay import compare_models
from .fem import UnsupportedGeometryError
from .mesh import MeshError, MeshIntegrityError, MeshParseError, UnsupportedElementError
from .pipeline import Pipeline, StageError
from .plot import emit_plot
from .store import StoreFormatError, read_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

STAGE_COMMANDS = ("mesh", "eigs", "constants", "snapshots", "pod", "fit", "run", "plot")


def _constants_pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected c_coer,c_cont") from None
    if not (a > 0 and b > 0):
        raise argparse.ArgumentTypeError("constants must be positive")
    return a, b


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment file (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--serial", action="store_true", help="solve snapshots one at a time")
    common.add_argument("--override-constants", type=_constants_pair, metavar="C_COER,C_CONT")
    common.add_argument("--seed", type=_u64)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="knwidth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGE_COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("fit", "plot"):
            sp.add_argument("--csv", type=Path,
                            help="fit/plot this n,eps... table instead of running the pipeline")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.override_constants:
        changes["c_coer"], changes["c_cont"] = args.override_constants
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def _table_curve(path: Path) -> dict:
    header, rows = read_csv(path)
    if len(header) < 2 or header[0] != "n":
        raise StoreFormatError(f"{path}: first column must be 'n'")
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    curve = {"n": [float(v) for v in cols[0]]}
    for name, col in zip(header[1:], cols[1:]):
        curve[name] = [float(v) for v in col]
    return curve


def _fit_table(args, cfg) -> int:
    curve = _table_curve(args.csv)
    fits = {}
    for name, eps in curve.items():
        if name == "n":
            continue
        fits[name] = compare_models(list(zip(curve["n"], eps)), cfg.exponents,
                                    tau=cfg.tau, slope_factor=cfg.slope_factor)
    if args.command == "fit":
        for name, ranked in fits.items():
            print(f"[{name}] ranked by R2")
            for f in ranked:
                print("  " + f.as_text())
    else:
        primary = [(k, f) for k, ranked in fits.items() for f in ranked
                   if abs(f.a - cfg.exponents[0]) < 1e-12]
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "decay.svg").write_text(emit_plot(curve, primary))
        print(args.out / "decay.svg")
    return EXIT_OK


def _summary(pipe: Pipeline, stage: str) -> str:
    rep = pipe.report
    if stage == "mesh":
        m = rep.mesh
        return f"mesh: {m.n_vertices} vertices, {m.n_triangles} triangles, area {m.area():.17g}"
    if stage == "eigs":
        return f"eigs: {len(pipe.eigs())} pairs -> {pipe.out / 'eigs.csv'}"
    if stage == "constants":
        return rep.constants.as_text(pipe.config.nu).rstrip()
    if stage == "snapshots":
        return f"snapshots: {pipe.snapshots().N} converged, max |u|_H1 = {rep.max_u_norm:.6e}"
    if stage == "pod":
        return f"curve -> {pipe.out / 'knw_curve.csv'}"
    if stage == "plot":
        return str(pipe.out / "decay.svg")
    return (pipe.out / "fit_report.txt").read_text().rstrip()


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (OSError, StoreFormatError, MeshParseError, UnsupportedElementError,
                        MeshIntegrityError)):
        return EXIT_IO
    if isinstance(exc, (ConfigError, MeshError, UnsupportedGeometryError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        if getattr(args, "csv", None) is not None:
            return _fit_table(args, cfg)
        pipe = Pipeline(cfg, args.out, serial=args.serial)
        if args.command == "run":
            pipe.run()
            stage = "fit"
        else:
            stage = args.command
            getattr(pipe, stage)()
        print(_summary(pipe, stage))
        return EXIT_OK
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc.cause)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = _exit_code(exc)
        if code == EXIT_NUMERIC and not isinstance(exc, (ArithmeticError, RuntimeError, ValueError)):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
