"""Assemble and run one experiment from an :class:`ExperimentConfig`."""

from __future__ import annotations

import contextlib
import json
from pathlib import Path
from typing import Any, Callable, Iterator

from .agent import Agent
from .agent.models import ModelPool
from .callbacks import build_callbacks
from .config import ExperimentConfig, parse_config
from .controller import Controller
from .core import MetricsReport, TaskInstance, load_tasks
from .environments import build_environment
from .errors import ConfigError, DatasetError

CONFIG_COPY = "config.json"
METRICS_FILE = "metrics.json"


def load_dataset(config: ExperimentConfig) -> tuple[list[TaskInstance], bytes]:
    path = config.dataset_path
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    tasks = load_tasks(path)
    if not tasks:
        raise DatasetError(f"dataset {path} has no tasks")
    kinds = {t.env_kind for t in tasks}
    if kinds != {config.environment.kind}:
        raise ConfigError(f"dataset holds {sorted(k.value for k in kinds)} tasks but the environment is {config.environment.kind.value}")
    return tasks, data


def _component_spec(config: ExperimentConfig) -> dict[str, Any]:
    return {
        "environment": config.environment.model_dump(mode="json"),
        "round_limit": config.round_limit,
        "base_dir": config.base_dir,
    }


@contextlib.contextmanager
def open_environment(config: ExperimentConfig) -> Iterator[Any]:
    """A local environment, or a remote one launched through the server-side controller."""
    if config.deployment.mode == "local":
        env = build_environment(
            config.environment,
            config.round_limit,
            base_dir=Path(config.base_dir) if config.base_dir else None,
        )
        try:
            yield env
        finally:
            env.release()
        return
    from .rpc import RpcClient, bootstrap_start, bootstrap_stop

    controller, addresses = bootstrap_start(
        config.deployment.controller, _component_spec(config), token=config.deployment.token
    )
    client = RpcClient(token=config.deployment.token)
    try:
        env = client.connect(addresses["environment"])
        try:
            yield env
        finally:
            env.release()
    finally:
        bootstrap_stop(controller)
        client.close()


def save_config_copy(config: ExperimentConfig, out_dir: Path) -> None:
    data = config.model_dump(mode="json")
    data["base_dir"] = config.base_dir
    data["output_dir"] = str(out_dir.resolve())
    (out_dir / CONFIG_COPY).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_config_copy(out_dir: Path) -> ExperimentConfig:
    path = out_dir / CONFIG_COPY
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(raw)


def run_experiment(
    config: ExperimentConfig,
    *,
    tasks: list[TaskInstance] | None = None,
    dataset_bytes: bytes | None = None,
    timestamps: bool = True,
    fault_hook: Callable[[str, int], None] | None = None,
) -> MetricsReport:
    """Run (or continue) the experiment; writes sessions, snapshot, config copy and metrics."""
    if tasks is None or dataset_bytes is None:
        tasks, dataset_bytes = load_dataset(config)
    pool = ModelPool(config.models, Path(config.base_dir) if config.base_dir else None)
    pool.require([config.agent.model])
    agent = Agent(pool.get(config.agent.model), context_limit=config.agent.context_limit)
    callbacks = build_callbacks(config.callbacks)
    out_dir = config.output_path
    with open_environment(config) as env:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_config_copy(config, out_dir)
        controller = Controller(
            agent,
            env,
            callbacks,
            round_limit=config.round_limit,
            output_dir=out_dir,
            config_digest=config.digest(dataset_bytes),
            timestamps=timestamps,
            fault_hook=fault_hook,
        )
        report = controller.run(tasks)
    (out_dir / METRICS_FILE).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
