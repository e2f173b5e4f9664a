"""``xeus-forge {segment|label|augment|batch|bench|stats} --config PATH [--seed N] [--jobs N]``.

``--p-noise``, ``--snr-min`` and ``--snr-max`` override the noise section of the config.

Prints the command summary as JSON on stdout. On failure a JSON error
summary goes to stderr and the exit code is 1 (2 for usage errors).
Log level comes from ``XEUS_FORGE_LOG`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from xeus_forge.config import load_config, with_overrides
from xeus_forge.pipeline import COMMANDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xeus-forge", description="Speech SSL pre-training data engine.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads")
    parser.add_argument("--p-noise", type=float, default=None, help="noise corruption probability")
    parser.add_argument("--snr-min", type=float, default=None, help="lowest mixing SNR in dB")
    parser.add_argument("--snr-max", type=float, default=None, help="highest mixing SNR in dB")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("XEUS_FORGE_LOG", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = with_overrides(
            load_config(args.config), seed=args.seed, jobs=args.jobs,
            p_noise=args.p_noise, snr_min=args.snr_min, snr_max=args.snr_max,
        )
        summary = COMMANDS[args.command](cfg)
    except Exception as exc:  # reported as a machine-readable summary
        logging.getLogger("xeus_forge").debug("command failed", exc_info=True)
        err = {"command": args.command, "ok": False, "errors": [{"type": type(exc).__name__, "error": str(exc)}]}
        print(json.dumps(err), file=sys.stderr)
        return 1
    ok = not summary["errors"]
    summary["ok"] = ok
    print(json.dumps(summary, indent=1, default=str))
    if not ok:
        print(json.dumps({"command": args.command, "ok": False, "errors": summary["errors"]}), file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
