"""Server command line: `python -m urbanflow.cli serve --port 8080 ...`"""

from __future__ import annotations

import argparse
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbanflow")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run the workspace service")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", type=Path, default=Path("."),
                       help="directory file-loader nodes read from")
    serve.add_argument("--db-path", default="urbanflow.db",
                       help="embedded database file (provenance, layers, events)")
    serve.add_argument("--exec-timeout-ms", type=int, default=60_000)
    serve.add_argument("--capture-row-limit", type=int, default=10_000)
    serve.add_argument("--worker-cmd", default=None,
                       help="command line for the analysis-node worker process "
                            "(whitespace-split); default runs analysis nodes in-process")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app
        from .workspace import Hub

        hub = Hub(db_path=args.db_path, data_dir=args.data_dir,
                  capture_row_limit=args.capture_row_limit,
                  exec_timeout_ms=args.exec_timeout_ms,
                  worker_argv=args.worker_cmd.split() if args.worker_cmd else None)
        uvicorn.run(create_app(hub), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
