from __future__ import annotations

from collections import Counter

import pytest

from lifelong_harness.agent import Agent, ScriptedModel, ScriptRule, parse_action
from lifelong_harness.callbacks import Callback, ExperienceReplayCallback
from lifelong_harness.controller import (
    Controller,
    ExperimentState,
    normalize_log_bytes,
    restore_snapshot,
    save_snapshot,
)
from lifelong_harness.core import Outcome, Role, SampleStatus, load_sessions, load_tasks
from lifelong_harness.environments import DBEnvironment
from lifelong_harness.errors import ConfigError, DatasetError, EnvironmentFailure, SnapshotError

from conftest import DEMO

TASKS = load_tasks(DEMO / "db" / "tasks.jsonl")[:3]
DEMO_RULES = [r for r in ScriptedModel.from_file(DEMO / "db" / "agent.json").rules]


def demo_agent(**kw) -> Agent:
    return Agent(ScriptedModel(DEMO_RULES, default="I am not sure what to do."), **kw)


class Recorder(Callback):
    name = "recorder"

    def __init__(self):
        self.events: list[str] = []
        self.seen: list[int] = []

    def __getattribute__(self, item):
        if item.startswith(("on_", "restore_state")):
            events = object.__getattribute__(self, "events")
            return lambda ctx: events.append(item)
        return object.__getattribute__(self, item)


def test_events_fire_in_order_with_expected_cardinality():
    rec = Recorder()
    session = Controller(demo_agent(), DBEnvironment(), [rec], round_limit=3).execute_task(TASKS[0])
    assert session.reward == 1 and session.rounds_used == 2
    counts = Counter(rec.events)
    for once in ("on_session_create", "on_environment_reset", "on_environment_complete", "on_state_save"):
        assert counts[once] == 1
    assert counts["on_agent_inference"] == counts["on_environment_interact"] == 2
    assert rec.events[0] == "on_session_create" and rec.events[-1] == "on_state_save"
    assert "restore_state" not in counts


def test_handlers_share_the_session_in_registration_order():
    order = []

    class First(Callback):
        def on_session_create(self, ctx):
            ctx.session.difficulty = "tagged"
            order.append("first")

    class Second(Callback):
        def on_session_create(self, ctx):
            order.append(ctx.session.difficulty)

    Controller(demo_agent(), DBEnvironment(), [First(), Second()], round_limit=3).execute_task(TASKS[0])
    assert order == ["first", "tagged"]


def test_skipping_interact_suppresses_that_step():
    class Skip(Callback):
        def on_agent_inference(self, ctx):
            ctx.flags.should_environment_interact = False

    calls = []
    env = DBEnvironment()
    real = env.interact
    env.interact = lambda action: calls.append(action) or real(action)
    session = Controller(demo_agent(), env, [Skip()], round_limit=3).execute_task(TASKS[0])
    assert calls == []
    assert session.status is SampleStatus.TASK_LIMIT_REACHED


def test_callback_can_request_regeneration_of_an_unparseable_reply():
    replies = iter(["garbled", *["Action: Operation\n```sql\nSELECT 1\n```"] * 5])

    class Flaky:
        def complete(self, messages, **kw):
            return next(replies)

    class Regenerate(Callback):
        def on_agent_inference(self, ctx):
            last = ctx.session.history.messages[-1]
            if not parse_action(ctx.session.env_kind, last.content).valid:
                ctx.session.history.messages.pop()
                ctx.flags.should_environment_interact = False

    session = Controller(Agent(Flaky()), DBEnvironment(), [Regenerate()], round_limit=3).execute_task(TASKS[0])
    assert session.status is SampleStatus.TASK_LIMIT_REACHED
    assert all(m.content != "garbled" for m in session.history.messages)


def test_skipping_complete_aborts_without_reward():
    class NoJudge(Callback):
        def on_environment_interact(self, ctx):
            ctx.flags.should_environment_complete = False

    rec = Recorder()
    session = Controller(demo_agent(), DBEnvironment(), [NoJudge(), rec], round_limit=3).execute_task(TASKS[0])
    assert session.status is SampleStatus.COMPLETED
    assert session.reward == 0 and session.outcome is Outcome.INCORRECT
    assert "on_environment_complete" not in rec.events


def test_skipping_reset_leaves_no_active_environment():
    class NoReset(Callback):
        def on_session_create(self, ctx):
            ctx.flags.should_environment_reset = False
            ctx.session.status = SampleStatus.TASK_UNKNOWN_ERROR

    env = DBEnvironment()
    session = Controller(demo_agent(), env, [NoReset()], round_limit=3).execute_task(TASKS[0])
    assert session.reward == 0
    assert env.active_task is None


def test_raising_callback_is_agent_unknown_error_and_run_continues(tmp_path):
    class Boom(Callback):
        def on_agent_inference(self, ctx):
            if ctx.session.task_id == TASKS[0].task_id:
                raise RuntimeError("boom")

    controller = Controller(demo_agent(), DBEnvironment(), [Boom()], round_limit=3, output_dir=tmp_path)
    report = controller.run(TASKS)
    sessions = load_sessions(tmp_path / "sessions.jsonl")
    assert sessions[0].status is SampleStatus.AGENT_UNKNOWN_ERROR and sessions[0].reward == 0
    assert [s.reward for s in sessions[1:]] == [1, 1]
    assert report.session_count == 3


def test_context_limit_and_out_of_memory_statuses():
    session = Controller(demo_agent(context_limit=10), DBEnvironment(), round_limit=3).execute_task(TASKS[0])
    assert session.status is SampleStatus.AGENT_CONTEXT_LIMIT and session.rounds_used == 0
    oom = Agent(ScriptedModel([ScriptRule(error="out_of_memory")]))
    assert Controller(oom, DBEnvironment(), round_limit=3).execute_task(TASKS[0]).status is SampleStatus.AGENT_OUT_OF_MEMORY


def test_environment_failure_marks_only_current_task(tmp_path):
    env = DBEnvironment()
    real = env._reset

    def flaky_reset(task):
        if task.task_id == TASKS[1].task_id:
            raise EnvironmentFailure("backend unreachable")
        return real(task)

    env._reset = flaky_reset
    Controller(demo_agent(), env, round_limit=3, output_dir=tmp_path).run(TASKS)
    statuses = [s.status for s in load_sessions(tmp_path / "sessions.jsonl")]
    assert statuses == [SampleStatus.COMPLETED, SampleStatus.TASK_ENVIRONMENT_ERROR, SampleStatus.COMPLETED]


def test_sessions_persist_before_next_task(tmp_path):
    persisted: list[int] = []
    started: list[tuple[int, int]] = []

    class Watch(Callback):
        def on_session_create(self, ctx):
            started.append((len(persisted), len(ctx.history)))

    controller = Controller(
        demo_agent(), DBEnvironment(), [Watch()], round_limit=3, output_dir=tmp_path, persisted=persisted.append
    )
    controller.run(TASKS)
    assert persisted == [0, 1, 2]
    assert started == [(0, 0), (1, 1), (2, 2)]


def test_run_rejects_empty_and_mismatched_tasks():
    controller = Controller(demo_agent(), DBEnvironment(), round_limit=3)
    with pytest.raises(DatasetError):
        controller.run([])
    with pytest.raises(ConfigError):
        controller.run(load_tasks(DEMO / "os" / "tasks.jsonl")[:1])


# -- snapshots -----------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    state = ExperimentState("abc", 4, "sessions.jsonl", {"0:x": b"\x00\xffbytes", "1:y": b""})
    data = save_snapshot(state, tmp_path / "s.llh")
    assert (tmp_path / "s.llh").read_bytes() == data
    assert restore_snapshot(tmp_path / "s.llh") == state


@pytest.mark.parametrize(
    "data", [b"", b"garbage", b"LLH-SNAPSHOT v1\n{", b'LLH-SNAPSHOT v1\n{"config_digest": "x"}', b"\xff\xfe"]
)
def test_corrupt_snapshot_is_refused(tmp_path, data):
    (tmp_path / "s.llh").write_bytes(data)
    with pytest.raises(SnapshotError):
        restore_snapshot(tmp_path / "s.llh")


def _resume_controller(tmp_path, digest="d1", callbacks=None):
    return Controller(
        demo_agent(), DBEnvironment(), callbacks or [ExperienceReplayCallback(n=1)], round_limit=3,
        output_dir=tmp_path, config_digest=digest, timestamps=False,
    )


def test_resume_after_interruption_matches_uninterrupted(tmp_path):
    full = tmp_path / "full"
    _resume_controller(full, callbacks=[ExperienceReplayCallback(n=1), Recorder()]).run(TASKS)

    class Kill(Exception):
        pass

    def hook(where, index):
        if (where, index) == ("after_log", 1):
            raise Kill

    part = tmp_path / "part"
    interrupted = _resume_controller(part, callbacks=[ExperienceReplayCallback(n=1), Recorder()])
    interrupted.fault_hook = hook
    with pytest.raises(Kill):
        interrupted.run(TASKS)
    assert restore_snapshot(part / "snapshot.llh").next_task_index == 1
    rec = Recorder()
    resumed = _resume_controller(part, callbacks=[ExperienceReplayCallback(n=1), rec])
    resumed.run(TASKS)
    assert rec.events.count("restore_state") == 1
    assert (part / "sessions.jsonl").read_bytes() == (full / "sessions.jsonl").read_bytes()


def test_resume_refuses_changed_config(tmp_path):
    _resume_controller(tmp_path).run(TASKS)
    with pytest.raises(SnapshotError, match="different config"):
        _resume_controller(tmp_path, digest="d2").run(TASKS)


def test_resume_refuses_log_without_snapshot(tmp_path):
    _resume_controller(tmp_path).run(TASKS)
    (tmp_path / "snapshot.llh").unlink()
    with pytest.raises(SnapshotError, match="no snapshot"):
        _resume_controller(tmp_path).run(TASKS)


def test_resume_refuses_truncated_log(tmp_path):
    _resume_controller(tmp_path).run(TASKS)
    (tmp_path / "sessions.jsonl").write_text("")
    with pytest.raises(SnapshotError, match="log has 0 sessions"):
        _resume_controller(tmp_path).run(TASKS)


def test_resume_refuses_changed_callback_chain(tmp_path):
    _resume_controller(tmp_path).run(TASKS)
    with pytest.raises(SnapshotError):
        _resume_controller(tmp_path, callbacks=[Recorder()]).run(TASKS)


def test_normalize_drops_timestamps_only():
    a = b'{"a": 1, "timestamp": "t1"}\n{"b": 2}\n'
    b = b'{"a": 1, "timestamp": "t2"}\n{"b": 2, "timestamp": "t3"}\n'
    assert normalize_log_bytes(a) == normalize_log_bytes(b) == b'{"a": 1}\n{"b": 2}\n'


def test_history_roles_alternate_in_every_logged_session(tmp_path):
    _resume_controller(tmp_path).run(TASKS)
    for s in load_sessions(tmp_path / "sessions.jsonl"):
        s.history.validate()
        s.check(round_limit=3)
        assert s.history.messages[s.history.task_start].role is Role.USER
