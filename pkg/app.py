# =========================================
# file: app.py
# =========================================
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from tools.lab_commands import COMMANDS, run_command
from tools.lab_errors import LabError
from tools.lab_state import load_config, with_overrides

logger = logging.getLogger("su11")

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="su11-lab",
        description="Multimode PDC and SU(1,1) interferometer lab.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "run"):
        p = sub.add_parser(name, help="subcommand named by [run].pipeline" if name == "run" else None)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides [run].out)")
        p.add_argument("--workers", type=int, default=None, help="parallel jobs, 0 = all cores")
        p.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")
        p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        p.add_argument("--no-plots", action="store_true", help="skip SVG output")
    return parser


def setup_logging(level: str, out_dir: Path | None) -> None:
    handlers = [logging.StreamHandler(sys.stderr)]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(out_dir / "run.log", mode="w", encoding="utf-8"))
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, handlers=handlers, force=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, out=args.out, workers=args.workers, seed=args.seed,
                            plots=False if args.no_plots else None)
    except LabError as exc:
        setup_logging(args.log_level, None)
        logger.error("%s", exc)
        return exc.exit_code

    setup_logging(args.log_level, Path(cfg.run.out))
    try:
        run_command(args.command, cfg)
    except LabError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return exc.exit_code

    logger.info("%s finished", args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
