"""Command line entry point: ``rqwloc <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .config import ExperimentConfig, load_config
from .green import FitError, SolverError
from .runner import SUBCOMMANDS, _jsonable, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUT_ENV = "RQWLOC_OUT_ROOT"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rqwloc", description="Localization experiments for random coined quantum walks.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="JSON config (comments allowed); defaults apply when omitted")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, help=f"run directory (default: ${OUT_ENV}/<subcommand>-<config hash>)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _report(code: int, kind: str, errors: list, out: Path | None) -> int:
    report = {"status": "error", "kind": kind, "exit_code": code, "errors": errors}
    text = json.dumps(report, indent=2)
    print(text, file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.seed)
        else:
            cfg = ExperimentConfig(**({"seed": args.seed} if args.seed is not None else {}))
    except ValidationError as exc:
        errs = [{"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]} for e in exc.errors()]
        return _report(EXIT_CONFIG, "config", errs, args.out)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        return _report(EXIT_CONFIG, "config", [{"field": None, "message": str(exc)}], args.out)

    out = args.out or Path(os.environ.get(OUT_ENV, "runs")) / f"{args.subcommand}-{cfg.digest()[:12]}"
    try:
        summary = run(args.subcommand, cfg, out, max(1, args.threads))
    except (SolverError, FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _report(EXIT_NUMERIC, "numerical", [{"field": None, "message": str(exc)}], out)
    except ValueError as exc:
        return _report(EXIT_CONFIG, "precondition", [{"field": None, "message": str(exc)}], out)
    print(json.dumps(_jsonable({"status": "ok", "out": str(out), "summary": summary})))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
