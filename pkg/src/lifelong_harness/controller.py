"""Strictly sequential task scheduler with per-task snapshots."""

from __future__ import annotations

import base64
import datetime as _dt
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .agent.parsing import parse_action
from .callbacks.base import Callback, CallbackContext, CallbackEvent, CallbackHandler, ControlFlags
from .core import (
    JUDGED_STATUSES,
    MetricsReport,
    Outcome,
    Role,
    SampleStatus,
    Session,
    TaskInstance,
    compute_metrics,
    load_sessions,
    session_line,
)
from .errors import (
    AgentContextLimit,
    AgentOutOfMemory,
    ConfigError,
    DatasetError,
    EnvironmentFailure,
    SnapshotError,
)

log = logging.getLogger(__name__)

SNAPSHOT_HEADER = "LLH-SNAPSHOT v1"
FAULT_ENV = "LLH_FAULT_AT"
FAULT_EXIT_CODE = 17


@dataclass
class ExperimentState:
    config_digest: str
    next_task_index: int
    session_log_path: str
    callback_states: dict[str, bytes] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        body = {
            "config_digest": self.config_digest,
            "next_task_index": self.next_task_index,
            "session_log_path": self.session_log_path,
            "callback_states": {k: base64.b64encode(v).decode("ascii") for k, v in sorted(self.callback_states.items())},
        }
        return (SNAPSHOT_HEADER + "\n" + json.dumps(body, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> ExperimentState:
        try:
            text = data.decode("utf-8")
            header, _, body = text.partition("\n")
            if header != SNAPSHOT_HEADER:
                raise SnapshotError(f"unrecognised snapshot header {header[:40]!r}")
            raw = json.loads(body)
            state = cls(
                config_digest=str(raw["config_digest"]),
                next_task_index=int(raw["next_task_index"]),
                session_log_path=str(raw["session_log_path"]),
                callback_states={k: base64.b64decode(v, validate=True) for k, v in raw["callback_states"].items()},
            )
        except SnapshotError:
            raise
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"corrupt snapshot: {exc}") from exc
        if state.next_task_index < 0:
            raise SnapshotError("corrupt snapshot: negative task index")
        return state


def save_snapshot(state: ExperimentState, path: str | Path) -> bytes:
    """Atomically write the snapshot; returns the persisted bytes."""
    path = Path(path)
    data = state.to_bytes()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return data


def restore_snapshot(path: str | Path) -> ExperimentState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    return ExperimentState.from_bytes(data)


def fault_hook_from_env() -> Callable[[str, int], None] | None:
    """``LLH_FAULT_AT=point:k`` hard-kills the process when ``point`` is reached for task ``k``."""
    spec = os.environ.get(FAULT_ENV)
    if not spec:
        return None
    point, _, index = spec.partition(":")
    target = int(index)

    def hook(where: str, task_index: int) -> None:
        if where == point and task_index == target:
            os._exit(FAULT_EXIT_CODE)

    return hook


def utc_timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def normalize_log_bytes(data: bytes) -> bytes:
    """Drop the timestamp sidecar from every log line."""
    out = []
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        record.pop("timestamp", None)
        out.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    return ("\n".join(out) + ("\n" if out else "")).encode("utf-8")


class Controller:
    """Drives agent and environment over an ordered task list.

    Each finished session is appended to the log and followed by a snapshot,
    so an interruption loses at most the task that was in flight.
    """

    def __init__(
        self,
        agent: Any,
        environment: Any,
        callbacks: Sequence[Callback] = (),
        *,
        round_limit: int,
        output_dir: str | Path | None = None,
        config_digest: str = "",
        timestamps: bool = True,
        fault_hook: Callable[[str, int], None] | None = None,
        persisted: Callable[[int], None] | None = None,
    ):
        self.agent = agent
        self.environment = environment
        self.handler = CallbackHandler(callbacks)
        self.round_limit = round_limit
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.config_digest = config_digest
        self.timestamps = timestamps
        self.fault_hook = fault_hook
        self.persisted = persisted
        self.history: list[Session] = []
        self.restored = False

    @property
    def log_path(self) -> Path | None:
        return self.output_dir / "sessions.jsonl" if self.output_dir else None

    @property
    def snapshot_path(self) -> Path | None:
        return self.output_dir / "snapshot.llh" if self.output_dir else None

    def _fault(self, where: str, index: int) -> None:
        if self.fault_hook is not None:
            self.fault_hook(where, index)

    # -- events ------------------------------------------------------------

    def dispatch(self, event: CallbackEvent, ctx: CallbackContext) -> bool:
        """Run every handler in order; a raising handler marks the session
        ``agent_unknown_error``. Returns False when that happened."""
        try:
            self.handler.dispatch(event, ctx)
        except Exception as exc:  # handlers are user code
            log.warning("callback failed during %s: %r", event.value, exc)
            if ctx.session is not None:
                ctx.session.status = SampleStatus.AGENT_UNKNOWN_ERROR
            return False
        return True

    # -- one task ------------------------------------------------------------

    def execute_task(self, task: TaskInstance, flags: ControlFlags | None = None) -> Session:
        flags = flags or ControlFlags()
        flags.reset()
        session = Session(task.task_id, task.env_kind, task.skills, task.difficulty)
        ctx = CallbackContext(self.agent, self.environment, session, self.history, flags)
        env = self.environment
        env_active = False

        self.dispatch(CallbackEvent.ON_SESSION_CREATE, ctx)
        if not session.terminal and flags.should_environment_reset:
            try:
                session.history = env.reset(task)
                env_active = True
            except EnvironmentFailure as exc:
                log.warning("%s: environment reset failed: %s", task.task_id, exc)
                session.status = SampleStatus.TASK_ENVIRONMENT_ERROR
            except Exception as exc:
                log.warning("%s: reset raised %r", task.task_id, exc)
                session.status = SampleStatus.TASK_UNKNOWN_ERROR
            if env_active:
                self.dispatch(CallbackEvent.ON_ENVIRONMENT_RESET, ctx)

        iterations = 0
        max_iterations = 4 * self.round_limit + 8
        while not session.terminal:
            flags.reset()
            if flags.should_agent_inference:
                self._inference_step(task, session)
                if session.terminal:
                    break
                if not self.dispatch(CallbackEvent.ON_AGENT_INFERENCE, ctx) or session.terminal:
                    break
            if flags.should_environment_interact:
                self._interact_step(session)
                self.dispatch(CallbackEvent.ON_ENVIRONMENT_INTERACT, ctx)
                if session.terminal:
                    break
            session.rounds_used = self._rounds(session)
            if session.rounds_used >= self.round_limit:
                session.status = SampleStatus.TASK_LIMIT_REACHED
            iterations += 1
            if not session.terminal and iterations >= max_iterations:
                log.warning("%s: loop made no progress; aborting", task.task_id)
                session.status = SampleStatus.TASK_UNKNOWN_ERROR
        session.rounds_used = min(self._rounds(session), self.round_limit)

        reward = 0
        if flags.should_environment_complete:
            if env_active:
                try:
                    reward = int(env.complete(session))
                except EnvironmentFailure as exc:
                    log.warning("%s: complete failed: %s", task.task_id, exc)
                    session.status = SampleStatus.TASK_ENVIRONMENT_ERROR
                except Exception as exc:
                    log.warning("%s: complete raised %r", task.task_id, exc)
                    session.status = SampleStatus.TASK_UNKNOWN_ERROR
                env_active = False
            self._judge(session, reward)
            self.dispatch(CallbackEvent.ON_ENVIRONMENT_COMPLETE, ctx)
        elif env_active:
            env.abort()
        if session.outcome is Outcome.UNKNOWN:
            self._judge(session, 0)
        self.dispatch(CallbackEvent.ON_STATE_SAVE, ctx)
        # Re-derive so a late handler failure still zeroes the reward.
        self._judge(session, session.reward)
        return session

    @staticmethod
    def _judge(session: Session, reward: int) -> None:
        if session.status not in JUDGED_STATUSES:
            reward = 0
        session.reward = 1 if reward == 1 else 0
        session.outcome = Outcome.CORRECT if session.reward else Outcome.INCORRECT

    @staticmethod
    def _rounds(session: Session) -> int:
        return sum(1 for m in session.history.transcript() if m.role is Role.AGENT)

    def _inference_step(self, task: TaskInstance, session: Session) -> None:
        try:
            tokens = self.agent.count_prompt_tokens(session.history)
            text = self.agent.inference(session.history, task.task_id)
        except AgentContextLimit:
            session.status = SampleStatus.AGENT_CONTEXT_LIMIT
            return
        except AgentOutOfMemory:
            session.status = SampleStatus.AGENT_OUT_OF_MEMORY
            return
        except Exception as exc:
            log.warning("%s: inference failed: %r", task.task_id, exc)
            session.status = SampleStatus.AGENT_UNKNOWN_ERROR
            return
        session.record_prompt(tokens)
        session.history.append(Role.AGENT, text)

    def _interact_step(self, session: Session) -> None:
        messages = session.history.messages
        if not messages or messages[-1].role is not Role.AGENT:
            return
        action = parse_action(session.env_kind, messages[-1].content)
        if not action.valid:
            session.status = SampleStatus.AGENT_VALIDATION_FAILED
            return
        try:
            result = self.environment.interact(action)
        except EnvironmentFailure as exc:
            log.warning("%s: interact failed: %s", session.task_id, exc)
            session.status = SampleStatus.TASK_ENVIRONMENT_ERROR
            return
        except Exception as exc:
            log.warning("%s: interact raised %r", session.task_id, exc)
            session.status = SampleStatus.TASK_UNKNOWN_ERROR
            return
        if result.finished:
            session.status = SampleStatus.COMPLETED
        else:
            session.history.append(Role.USER, result.observation or "(no output)")

    # -- experiment ------------------------------------------------------------

    def _restore(self, n_tasks: int, dataset_digest: str) -> int:
        snap, logp = self.snapshot_path, self.log_path
        if snap is None or logp is None:
            return 0
        if not snap.exists():
            if logp.exists() and logp.stat().st_size > 0:
                raise SnapshotError(f"{logp} has sessions but no snapshot; refusing to guess where to resume")
            return 0
        state = restore_snapshot(snap)
        if state.config_digest != dataset_digest:
            raise SnapshotError("snapshot was written by a different config or dataset; refusing to resume")
        if state.next_task_index > n_tasks:
            raise SnapshotError(f"snapshot task index {state.next_task_index} exceeds task count {n_tasks}")
        lines = logp.read_bytes().splitlines(keepends=True) if logp.exists() else []
        if len(lines) < state.next_task_index:
            raise SnapshotError(f"log has {len(lines)} sessions but snapshot expects {state.next_task_index}")
        # Sessions written after the last snapshot are re-run.
        logp.write_bytes(b"".join(lines[: state.next_task_index]))
        self.history[:] = load_sessions(logp) if state.next_task_index else []
        try:
            self.handler.load_state_dicts(state.callback_states)
        except ValueError as exc:
            raise SnapshotError(str(exc)) from exc
        self.restored = True
        ctx = CallbackContext(self.agent, self.environment, None, self.history, ControlFlags())
        self.handler.dispatch(CallbackEvent.RESTORE_STATE, ctx)
        return state.next_task_index

    def _persist(self, index: int, session: Session) -> None:
        logp, snap = self.log_path, self.snapshot_path
        if logp is None or snap is None:
            return
        stamp = utc_timestamp() if self.timestamps else None
        with open(logp, "a", encoding="utf-8") as fh:
            fh.write(session_line(session, stamp))
            fh.flush()
            os.fsync(fh.fileno())
        self._fault("after_log", index)
        state = ExperimentState(self.config_digest, index + 1, str(logp.name), self.handler.state_dicts())
        save_snapshot(state, snap)
        self._fault("after_snapshot", index)
        if self.persisted is not None:
            self.persisted(index)

    def run(self, tasks: Sequence[TaskInstance]) -> MetricsReport:
        if not tasks:
            raise DatasetError("no tasks to run")
        kind = self.environment.kind
        mismatched = [t.task_id for t in tasks if t.env_kind is not kind]
        if mismatched:
            raise ConfigError(f"tasks {mismatched[:5]} do not match the {kind.value} environment")
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        start = self._restore(len(tasks), self.config_digest)
        if start == 0 and self.snapshot_path is not None and not self.snapshot_path.exists():
            # A crash during the first task must still leave something to resume from.
            logp = self.log_path
            assert logp is not None
            logp.touch()
            save_snapshot(ExperimentState(self.config_digest, 0, logp.name, self.handler.state_dicts()), self.snapshot_path)
        for index in range(start, len(tasks)):
            self._fault("before_task", index)
            session = self.execute_task(tasks[index])
            self.history.append(session)
            self._persist(index, session)
        report = compute_metrics(self.history)
        report.environment = self.environment.calculate_metric(self.history)
        return report
