# cli/main.py
from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Sequence

from config_utils.config_manager import ConfigManager
from core.config_keys import ConfigKeys
from core.errors import ConfigError, MsfaForgeError
from core.framework_settings import LOGS_DIR, ensure_report_dirs
from cli import commands
from utils.common.logger import configure_logging, get_logger
from utils.common.parallel import resolve_threads

"""
Command line front end: `python msfa_forge.py <command> [options]`.

stdout carries exactly one JSON document per run; logs and the human summary go to stderr.
Exit codes: 0 success, 1 data / numerical failure, 2 usage or configuration error.
"""

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

logger = get_logger("msfa_forge.cli")


def _ridge(raw: str) -> float | str:
    if raw.strip().lower() == "auto":
        return "auto"
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ridge must be a number or 'auto', got {raw!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("ridge must be >= 0")
    return value


def _box(raw: str) -> list[int]:
    try:
        parts = [int(p) for p in raw.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must be x0,y0,x1,y1 integers, got {raw!r}")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"box must have 4 values, got {len(parts)}")
    return parts


def _add_run_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="RunConfig JSON document")
    p.add_argument("--output-dir", help="override output_dir")
    p.add_argument("--outer-iters", type=int, help="outer alternating iterations")
    p.add_argument("--inner-max-iters", type=int, help="projected-gradient iterations per Phi update")
    p.add_argument("--seed", type=int, help="random initialisation seed")
    p.add_argument("--ridge", type=_ridge, help="absolute ridge >= 0, or 'auto' for the relative default")
    p.add_argument("--restarts", type=int, help="independent restarts (seeds seed, seed+1, ...)")
    p.add_argument("--max-training-samples", type=int, help="subsample the training neighborhoods")
    p.add_argument("--early-stop", action="store_true", default=None, help="stop on a stalled objective")
    p.add_argument("--deterministic-trace", action="store_true", default=None, help="write 0.0 in the seconds column")


def _run_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "output_dir": args.output_dir,
        "deterministic_trace": args.deterministic_trace,
        "optim": {
            "outer_iters": args.outer_iters,
            "inner_max_iters": args.inner_max_iters,
            "seed": args.seed,
            "ridge": args.ridge,
            "restarts": args.restarts,
            "max_training_samples": args.max_training_samples,
            "early_stop": args.early_stop,
        },
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msfa_forge",
        description="Joint MSFA / Wiener demosaicking design, simulation and evaluation.",
    )
    parser.add_argument("--threads", help="worker threads (integer or 'auto'); default from config")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR; default from config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="learn an MSFA and its nine-block Wiener matrix")
    _add_run_overrides(p)

    p = sub.add_parser("mosaic", help="simulate the sensor readout of a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--msfa", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("demosaic", help="reconstruct a cube from a mosaic")
    p.add_argument("--mosaic", required=True)
    p.add_argument("--msfa", required=True)
    p.add_argument("--matrix", required=True, help=".mat32 with its .json sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, help="crop the padded estimate to this width")
    p.add_argument("--height", type=int, help="crop the padded estimate to this height")

    p = sub.add_parser("eval", help="PSNR of a test cube against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)

    p = sub.add_parser("render", help="render a cube, or an MSFA filter pattern, to sRGB (binary PPM)")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--cube")
    source.add_argument("--msfa", help="render each filter as a transmittance under D65")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=1, help="repeat each pixel this many times per axis")

    p = sub.add_parser("synth", help="generate an H&E-like phantom cube")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--start-nm", type=float, default=420.0)
    p.add_argument("--stop-nm", type=float, default=720.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", help="write a reference filter array")
    p.add_argument("--kind", choices=("bandpass", "bayer"), required=True)
    p.add_argument("--cube", required=True, help="cube whose wavelength grid the filters are sampled on")
    p.add_argument("--out", required=True)
    p.add_argument("--markov-matrix", help="also write a nine-block Markov Wiener matrix here")
    p.add_argument("--rho-spatial", type=float)
    p.add_argument("--rho-spectral", type=float)
    p.add_argument("--ridge", type=_ridge)

    p = sub.add_parser("compare", help="evaluate trained and baseline designs on the test cubes")
    _add_run_overrides(p)

    p = sub.add_parser("spectrum", help="mean spectrum of a region")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", action="append", default=[], help="estimate cube(s) to compare")
    p.add_argument("--box", type=_box, help="x0,y0,x1,y1 (half-open)")
    p.add_argument("--threshold-nm", type=float, help="band used for threshold masking")
    p.add_argument("--threshold", type=float, help="keep pixels with value <= threshold at --threshold-nm")

    p = sub.add_parser("bands", help="band subset and/or quadrant split of a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start-nm", type=float)
    p.add_argument("--stop-nm", type=float)
    p.add_argument("--step-nm", type=float)
    p.add_argument("--quadrants", action="store_true", help="write <out>_1..4 quadrant cubes")
    return parser


def dispatch(args: argparse.Namespace, threads: int) -> Any:
    if args.command == "optimize":
        return commands.cmd_optimize(args.config, _run_overrides(args), threads)
    if args.command == "mosaic":
        return commands.cmd_mosaic(args.cube, args.msfa, args.out, threads)
    if args.command == "demosaic":
        return commands.cmd_demosaic(args.mosaic, args.msfa, args.matrix, args.out, args.width, args.height, threads)
    if args.command == "eval":
        return commands.cmd_eval(args.reference, args.test)
    if args.command == "render":
        return commands.cmd_render(args.cube, args.out, args.msfa, args.scale)
    if args.command == "synth":
        return commands.cmd_synth(args.width, args.height, args.bands, args.start_nm, args.stop_nm, args.seed, args.out)
    if args.command == "baseline":
        ridge = None if args.ridge in (None, "auto") else args.ridge
        return commands.cmd_baseline(args.kind, args.cube, args.out, args.markov_matrix,
                                     args.rho_spatial, args.rho_spectral, ridge)
    if args.command == "compare":
        return commands.cmd_compare(args.config, _run_overrides(args), threads)
    if args.command == "spectrum":
        return commands.cmd_spectrum(args.reference, args.test, args.box, args.threshold_nm, args.threshold)
    if args.command == "bands":
        return commands.cmd_bands(args.cube, args.out, args.start_nm, args.stop_nm, args.step_nm, args.quadrants)
    raise ConfigError("cli", "dispatch", f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        level = args.log_level or ConfigManager().get(ConfigKeys.LOG_LEVEL, "INFO")
        ensure_report_dirs()
        configure_logging(level, os.path.join(LOGS_DIR, f"msfa_forge_{args.command}.log"))
        threads = resolve_threads(args.threads)
        logger.debug(f"Command {args.command} with {threads} thread(s)")
        payload = dispatch(args, threads)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except MsfaForgeError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"[cli] Step: io | {e}")
        return EXIT_FAILURE

    print(commands.to_json(payload))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
