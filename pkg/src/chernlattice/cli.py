"""Command-line runner: ``chernlattice run|list|validate|export-preset``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .lattice import dump_document, load_document
from .scenarios import PhysicsError, SchemaError, export_preset, list_scenarios, run, validate

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_PHYSICS = 3
EXIT_RUNTIME = 4


def _load(path: str) -> dict:
    try:
        doc = load_document(path)
    except FileNotFoundError:
        raise SchemaError(f"config file {path} not found") from None
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise SchemaError(f"config file {path} is not valid: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("config must be a mapping at the top level")
    return doc


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chernlattice", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="validate a config and run its scenario")
    r.add_argument("--config", "-c", required=True)
    r.add_argument("--output-dir", "-o")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", "-j", type=int, default=1, help="threads for frequency and port sweeps")

    sub.add_parser("list", help="list available scenarios")

    v = sub.add_parser("validate", help="check a config without computing anything")
    v.add_argument("--config", "-c", required=True)
    v.add_argument("--seed", type=int)

    e = sub.add_parser("export-preset", help="write an editable config built from a preset")
    e.add_argument("name", nargs="?", default="paper-11x11")
    e.add_argument("--scenario", "-s", default="pulse")
    e.add_argument("--output", "-o", help="file to write (.yaml/.yml or .json); stdout if omitted")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(list_scenarios()))
            return EXIT_OK
        if args.command == "export-preset":
            doc = export_preset(args.name, args.scenario)
            if args.output:
                dump_document(doc, args.output)
            else:
                print(json.dumps(doc, indent=2))
            return EXIT_OK
        plan = validate(_load(args.config), args.seed)
        if args.command == "validate":
            print(f"ok: {plan.config.scenario}")
            return EXIT_OK
        manifest = run(plan, args.output_dir, args.workers)
        out = Path(args.output_dir or plan.config.output_dir or f"runs/{plan.config.scenario}")
        for f in manifest["files"]:
            print(out / f["path"])
        print(out / "manifest.json")
        return EXIT_OK
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except PhysicsError as exc:
        print(f"physics validation failed: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure with its type
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
