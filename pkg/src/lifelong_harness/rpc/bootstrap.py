"""Distributed bootstrap: a long-lived server-side controller that starts and
stops the environment and history-factory servers as child processes."""

from __future__ import annotations

import json
import os
import subprocess
import sys
import threading
import time
from typing import Any

from ..errors import HarnessError, wire_exception
from .remotable import remotable

READY_PREFIX = "RPC-LISTENING "


@wire_exception
class BootstrapError(HarnessError):
    pass


def spawn_worker(args: list[str], *, timeout: float = 30.0, env: dict[str, str] | None = None) -> tuple[subprocess.Popen, str]:
    """Launch ``python -m lifelong_harness.rpc.worker ARGS`` and wait for its address line."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "lifelong_harness.rpc.worker", *args],
        stdout=subprocess.PIPE,
        stderr=None,
        text=True,
        env=env,
    )
    assert proc.stdout is not None
    result: dict[str, str] = {}

    def read() -> None:
        for line in proc.stdout:  # type: ignore[union-attr]
            if line.startswith(READY_PREFIX):
                result["address"] = line[len(READY_PREFIX):].strip()
                return

    reader = threading.Thread(target=read, daemon=True)
    reader.start()
    reader.join(timeout)
    if "address" not in result:
        proc.kill()
        proc.wait()
        raise BootstrapError(f"worker {args[0]} did not report an address (exit code {proc.poll()})")
    return proc, result["address"]


def _terminate(proc: subprocess.Popen) -> None:
    if proc.poll() is None:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


@remotable(fields={"generation": False})
class ServerController:
    """Persistent process that outlives experiments.

    ``start`` is idempotent while components are running; ``stop`` is
    idempotent and leaves the controller itself serving.
    """

    generation: int

    def __init__(self, host: str = "127.0.0.1", token: str | None = None):
        self.host = host
        self.token = token
        self.generation = 0
        self._started_at = time.monotonic()
        self._lock = threading.Lock()
        self._procs: dict[str, subprocess.Popen] = {}
        self._addresses: dict[str, str] = {}

    def uptime(self) -> float:
        return time.monotonic() - self._started_at

    def start(self, config: dict[str, Any]) -> dict[str, str]:
        """Launch the factory server, then the environment server wired to it."""
        with self._lock:
            if self._addresses:
                return dict(self._addresses)
            common = ["--listen", f"{self.host}:0"]
            env = dict(os.environ)
            if self.token:
                env["LLH_RPC_TOKEN"] = self.token
            try:
                factory, factory_addr = spawn_worker(["factory", *common], env=env)
            except BootstrapError as exc:
                raise BootstrapError(f"history factory failed to launch: {exc}") from exc
            self._procs["factory"] = factory
            try:
                environment, env_addr = spawn_worker(
                    ["environment", *common, "--factory", factory_addr, "--spec", json.dumps(config)], env=env
                )
            except BootstrapError as exc:
                _terminate(factory)
                self._procs.clear()
                raise BootstrapError(f"environment server failed to launch: {exc}") from exc
            self._procs["environment"] = environment
            self._addresses = {"factory": factory_addr, "environment": env_addr}
            self.generation += 1
            return dict(self._addresses)

    def stop(self) -> None:
        with self._lock:
            for name in ("environment", "factory"):
                proc = self._procs.pop(name, None)
                if proc is not None:
                    _terminate(proc)
            self._addresses = {}

    def running(self) -> dict[str, str]:
        return dict(self._addresses)

    def pids(self) -> dict[str, int]:
        return {name: proc.pid for name, proc in self._procs.items()}


def bootstrap_start(controller_address: str, config: dict[str, Any], *, token: str | None = None) -> tuple[Any, dict[str, str]]:
    """Ask the server-side controller for fresh components; returns (controller proxy, addresses)."""
    from .client import RpcClient

    proxy = RpcClient(token=token).connect(controller_address)
    return proxy, proxy.start(config)


def bootstrap_stop(controller: Any) -> None:
    controller.stop()
