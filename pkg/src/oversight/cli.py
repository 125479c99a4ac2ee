"""Command line front door: serve the HTTP gateway, audit a dataset, or
replay one through the live decision flow.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .batch import batch_audit, replay
from .config import CONFIG_ENV, load_service_config, override
from .errors import OversightError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse insists on exiting 2 for bad arguments; we reserve 2 for
    runtime failures, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oversight", description="Runtime fairness oversight for binary classifiers.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    serve = sub.add_parser("serve", parents=[], help="run the HTTP gateway", add_help=True)
    serve.add_argument("--config", help=f"service config JSON (default: ${CONFIG_ENV})")
    serve.add_argument("--port", type=int, help="override the listen port")
    serve.add_argument("--lambda", dest="lam", type=float, help="override the flag threshold")
    serve.add_argument("--audit", help="override the audit log path")

    audit = sub.add_parser("audit", help="offline detector sweep over a CSV dataset")
    audit.add_argument("--schema", required=True, help="schema JSON path")
    audit.add_argument("--model", required=True, help="model JSON path")
    audit.add_argument("--data", required=True, help="dataset CSV path")
    audit.add_argument("--top", type=int, default=5, help="how many worst cases to explain (default 5)")
    audit.add_argument("--lambda", dest="lam", type=float, default=0.0, help="flag threshold (default 0)")
    audit.add_argument("--out", help="write the JSON report here instead of stdout")

    rep = sub.add_parser("replay", help="stream a CSV through the decision flow")
    rep.add_argument("--config", help=f"service config JSON (default: ${CONFIG_ENV})")
    rep.add_argument("--data", required=True, help="dataset CSV path")
    rep.add_argument("--rate", type=float, required=True, help="requests per second (must be > 0)")

    return parser


def _config_path(parser: argparse.ArgumentParser, arg: Optional[str], env=os.environ) -> str:
    if arg:
        return arg
    from_env = env.get(CONFIG_ENV)
    if from_env:
        return from_env
    parser.error(f"--config is required (or set ${CONFIG_ENV})")
    raise AssertionError("unreachable")


def _run_serve(args, parser) -> int:
    from .service import ExpiryWorker, build_runtime, create_app

    path = _config_path(parser, args.config)
    try:
        config = load_service_config(path)
        config = override(config, port=args.port, lam=args.lam, audit_path=args.audit)
        runtime = build_runtime(config)
    except (OversightError, OSError) as e:
        print(f"oversight serve: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    if config.auth_token is None:
        print("warning: no auth token configured; review endpoints will refuse requests", file=sys.stderr)

    app = create_app(runtime)
    worker = ExpiryWorker(runtime.monitor)
    worker.start()
    try:
        import uvicorn

        print(f"listening on http://{config.host}:{config.port} (model {runtime.monitor.model.model_id})")
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        worker.stop()
        runtime.close()
    return EXIT_OK


def _run_audit(args) -> int:
    try:
        report = batch_audit(
            args.schema, args.model, args.data, top_k=max(0, args.top), lam=args.lam
        )
    except (OversightError, OSError, ValueError) as e:
        print(f"oversight audit: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    text = json.dumps(report, indent=2)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as e:
            print(f"oversight audit: cannot write {args.out!r}: {e}", file=sys.stderr)
            return EXIT_RUNTIME
    else:
        print(text)
    return EXIT_OK


def _run_replay(args, parser) -> int:
    from .service import build_runtime

    if not args.rate > 0:
        parser.error("--rate must be positive")
    path = _config_path(parser, args.config)
    try:
        config = load_service_config(path)
        runtime = build_runtime(config)
    except (OversightError, OSError) as e:
        print(f"oversight replay: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        summary = replay(runtime.monitor, args.data, args.rate)
    except (OversightError, OSError, ValueError) as e:
        print(f"oversight replay: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        runtime.close()
    print(json.dumps(summary.to_wire(), indent=2))
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "serve":
        return _run_serve(args, parser)
    if args.command == "audit":
        return _run_audit(args)
    return _run_replay(args, parser)


if __name__ == "__main__":
    sys.exit(main())
