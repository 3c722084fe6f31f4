#!/usr/bin/env python3
"""
main.py - Entrypoint for the semi-supervised domain adaptation lab
"""

import argparse
import glob
import logging
import os
import sys
import traceback

# Add dependencies to path
if hasattr(sys, "_MEIPASS"):
    # Since pyinstaller unpacks the binary to a readonly tmp folder, use a write dir
    DEFAULT_BASE = os.path.join(os.environ.get("XDG_DATA_HOME", os.path.expanduser("~/.local/share")), "semida_lab")
else:
    # Use local path for dev
    DEFAULT_BASE = os.path.dirname(os.path.abspath(__file__))

DEPS_PATH = os.path.join(DEFAULT_BASE, "deps")
if not hasattr(sys, "_MEIPASS") and os.path.isdir(DEPS_PATH):
    sys.path.insert(0, DEPS_PATH)

from dicts import BOUND_DEFAULTS, EXIT_CODES, METHODS, SCENARIOS

log = logging.getLogger("CLI")

LOG_FORMAT = "[%(name)s] %(message)s"
MAX_LOGS = 3


def base_path() -> str:
    return os.environ.get("SEMIDA_HOME", DEFAULT_BASE)


# ----------------------------------------------------------------------
# Logging setup
# ----------------------------------------------------------------------
def initialize_logging(verbose: bool = False) -> None:
    log_dir = os.path.join(base_path(), "logs")
    os.makedirs(log_dir, exist_ok=True)

    # Delete oldest logs if more than 3 exist
    log_files = sorted(glob.glob(os.path.join(log_dir, "*.log")), key=os.path.getmtime)
    while len(log_files) >= MAX_LOGS:
        os.remove(log_files[0])
        log_files.pop(0)

    level_name = "DEBUG" if verbose else os.environ.get("LOG_LEVEL", "INFO").upper()
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(getattr(logging, level_name, logging.INFO))

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(console)

    log_file = os.environ.get("LOG_FILE", os.path.join(log_dir, f"run-{os.getpid()}.log"))
    try:
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(logging.Formatter("%(asctime)s " + LOG_FORMAT))
        root.addHandler(file_handler)
    except OSError as e:
        log.warning(f"Failed to open log file {log_file}: {e}")


# ----------------------------------------------------------------------
# Cleanup helper
# ----------------------------------------------------------------------
def cleanup(exit_code: int) -> int:
    for handler in list(logging.getLogger().handlers):
        try:
            handler.flush()
            handler.close()
        except Exception:
            pass
        logging.getLogger().removeHandler(handler)
    return exit_code


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semida", description="Semi-supervised domain adaptation lab")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p, task=None, out=True):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        if task is not None:
            p.add_argument("--task", required=task == "required", help="task directory written by gen-data")
        if out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen-data", help="generate and save a semi-DA task")
    common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--test-size", type=int, dest="test_size")

    p = sub.add_parser("train", help="train one method")
    common(p, task="optional")
    p.add_argument("--method", default="lirr", choices=sorted(METHODS))
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a task")
    common(p, task="required", out=False)
    p.add_argument("--model", required=True)

    p = sub.add_parser("bound", help="report the generalization-bound terms")
    common(p, task="required")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", default="finite_sample", choices=("population", "finite_sample"))
    p.add_argument("--delta", type=float, default=BOUND_DEFAULTS["delta"])

    p = sub.add_parser("sweep", help="run a multi-seed comparison")
    common(p)
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true", help="no progress bar or tables")

    p = sub.add_parser("plot", help="labeled-ratio curve from a sweep directory")
    p.add_argument("--results", required=True, help="sweep output directory")
    p.add_argument("--out", help="SVG path")
    return parser


# ----------------------------------------------------------------------
# Main entry point
# ----------------------------------------------------------------------
def main(argv=None) -> int:
    from objectives import ConfigError
    from toolbox import ExperimentToolbox

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CODES["OK"] if e.code == 0 else EXIT_CODES["CONFIG"]

    initialize_logging(args.verbose)
    mode = "Frozen (PyInstaller)" if hasattr(sys, "_MEIPASS") else "Source/Dev"
    log.debug(f"--- semida {args.command} --- mode: {mode}, base path: {base_path()}, python {sys.version.split()[0]}")

    try:
        code = ExperimentToolbox(args).run()
    except ConfigError as e:
        log.error(f"Configuration error: {e}")
        return cleanup(EXIT_CODES["CONFIG"])
    except KeyboardInterrupt:
        log.warning("Interrupted by user.")
        return cleanup(EXIT_CODES["INTERRUPT"])
    except Exception:
        log.error("--- CRASH REPORT ---\n" + traceback.format_exc())
        return cleanup(EXIT_CODES["RUNTIME"])
    return cleanup(code)


if __name__ == "__main__":
    sys.exit(main())
