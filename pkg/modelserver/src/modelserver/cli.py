"""Command line: serve the sidecar or record fixtures from a script."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import uvicorn

from . import __version__
from .app import create_app
from .config import ServerConfig
from .models import build_model_set
from .schemas import SchemaIndex, find_schema_dir
from .scripted import record_fixtures
from .service import InferenceService


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    for endpoint in ("tag", "generate", "detect", "segment"):
        parser.add_argument(
            f"--model-{endpoint}",
            default="synthetic",
            metavar="ID",
            help=f"{endpoint} model identifier (default: synthetic)",
        )
    parser.add_argument("--device", default="cpu", help="device selector (default: cpu)")
    parser.add_argument("--schemas", type=Path, help="wire schema directory (default: autodiscover)")


def _model_identifiers(args: argparse.Namespace) -> dict[str, str]:
    return {
        "tag": args.model_tag,
        "generate": args.model_generate,
        "detect": args.model_detect,
        "segment": args.model_segment,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelserver", description=__doc__)
    parser.add_argument("--version", action="version", version=f"modelserver {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP sidecar")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8701)
    serve.add_argument(
        "--record-dir", type=Path, help="mirror every response as a replay fixture"
    )
    _add_model_flags(serve)

    record = sub.add_parser(
        "record-fixtures", help="replay a scripted request list into fixture files"
    )
    record.add_argument("--requests", type=Path, required=True, help="request script JSON")
    record.add_argument("--out", type=Path, required=True, help="fixture output directory")
    _add_model_flags(record)

    return parser


def _serve(args: argparse.Namespace) -> int:
    config = ServerConfig(
        host=args.host,
        port=args.port,
        models=_model_identifiers(args),
        device=args.device,
        record_dir=args.record_dir,
        schema_dir=args.schemas,
    )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _record(args: argparse.Namespace) -> int:
    schemas = SchemaIndex(find_schema_dir(args.schemas))
    models = build_model_set(_model_identifiers(args), args.device)
    args.out.mkdir(parents=True, exist_ok=True)
    service = InferenceService(models, schemas, record_dir=args.out)
    report = record_fixtures(args.requests, service)
    failures = 0
    for row in report:
        if row["status"] == "ok":
            print(f"ok      {row['key']}")
        else:
            failures += 1
            print(f"failed  [{row['index']}] {row['method']}: {row['error']}")
    print(f"recorded {len(report) - failures} fixture(s), {failures} failure(s)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _serve(args)
        return _record(args)
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
