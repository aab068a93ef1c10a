"""Command line entry point: ``solve --config run.toml``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EMIT_CHOICES, ConfigError, describe_defaults, parse_config
from .run import EXIT_CONFIG, run

EPILOG = f"""exit codes:
  0  success
  2  convergence failure (partial outputs flushed, certificates.json status says which)
  3  configuration error or unwritable output directory (nothing is solved)

configuration keys and defaults (TOML):
{describe_defaults()}
"""


def _emit_list(text: str) -> tuple:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in items if s not in EMIT_CHOICES]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"choose from {','.join(EMIT_CHOICES)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="solve", description="Construct Einstein-Dirac solitons from the Choquard ground state "
                                  "by continuation in eps = m - omega.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="TOML run configuration (required unless --selftest).")
    ap.add_argument("--selftest", action="store_true", help="Run the fast elementary checks and exit.")
    ap.add_argument("--emit", type=_emit_list, default=None,
                    help=f"Comma-separated subset of {','.join(EMIT_CHOICES)} (overrides the config).")
    ap.add_argument("--out", default=None, help="Output directory (overrides the config).")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="More logging (-vv for debug).")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.selftest:
        from .selftest import run_selftest
        code = run_selftest()
        if args.config is None:
            return code
        if code:
            return code
    if args.config is None:
        print("solve: --config is required (see --help)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"solve: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, outdir=args.out, emit=args.emit)


if __name__ == "__main__":
    sys.exit(main())
