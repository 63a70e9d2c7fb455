"""Entry point for component server processes.

``python -m lifelong_harness.rpc.worker {controller,factory,environment} --listen HOST:PORT``
prints ``RPC-LISTENING host:port`` once ready and serves until terminated.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
from pathlib import Path

from . import bindings  # noqa: F401  (registers remote descriptors)
from .bootstrap import READY_PREFIX, ServerController
from .client import RpcClient
from .server import RpcServer


def _build(kind: str, args: argparse.Namespace, token: str | None):
    if kind == "controller":
        host = args.listen.rpartition(":")[0] or "127.0.0.1"
        return ServerController(host=host, token=token)
    from ..environments.base import ChatHistoryFactory

    if kind == "factory":
        return ChatHistoryFactory()
    from ..config import EnvironmentSpec
    from ..environments import build_environment

    spec = json.loads(args.spec)
    factory = RpcClient(token=token).connect(args.factory) if args.factory else None
    return build_environment(
        EnvironmentSpec.model_validate(spec["environment"]),
        int(spec["round_limit"]),
        base_dir=Path(spec["base_dir"]) if spec.get("base_dir") else None,
        factory=factory,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="lifelong_harness.rpc.worker")
    parser.add_argument("kind", choices=["controller", "factory", "environment"])
    parser.add_argument("--listen", default="127.0.0.1:0")
    parser.add_argument("--factory", default=None, help="history factory address (environment only)")
    parser.add_argument("--spec", default=None, help="JSON environment spec (environment only)")
    args = parser.parse_args(argv)
    token = os.environ.get("LLH_RPC_TOKEN") or None
    target = _build(args.kind, args, token)
    host, _, port = args.listen.rpartition(":")
    server = RpcServer(target, host=host or "127.0.0.1", port=int(port or 0), token=token)

    def shutdown(signum, frame):  # noqa: ARG001
        if isinstance(target, ServerController):
            target.stop()
        os._exit(0)

    signal.signal(signal.SIGTERM, shutdown)
    print(f"{READY_PREFIX}{server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        shutdown(None, None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
