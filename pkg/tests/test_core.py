from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifelong_harness.core import (
    ChatHistory,
    ChatMessage,
    EnvKind,
    Outcome,
    Role,
    SampleStatus,
    Session,
    TaskInstance,
    compute_metrics,
    count_history_tokens,
    dump_tasks,
    load_sessions,
    load_tasks,
    session_line,
    status_breakdown,
    success_rate,
)
from lifelong_harness.errors import DatasetError


def make_session(task_id="t", reward=0, status=SampleStatus.COMPLETED, skills=("select",), **kw) -> Session:
    outcome = Outcome.CORRECT if reward else Outcome.INCORRECT
    return Session(task_id, EnvKind.DB, skills, "easy", ChatHistory(), status, outcome, reward, 1, **kw)


def db_task(**changes) -> TaskInstance:
    data = {
        "task_id": "db-x",
        "env_kind": "DB",
        "instruction": "q",
        "setup": {},
        "ground_truth": {"rows": [[1]]},
        "skills": ["select"],
        "difficulty": "easy",
    }
    data.update(changes)
    return TaskInstance.from_dict(data)


def test_success_rate_and_breakdown_worked_example():
    sessions = [make_session(f"t{i}", reward=int(i < 3)) for i in range(4)]
    sessions.append(make_session("t4", status=SampleStatus.TASK_LIMIT_REACHED))
    assert success_rate(sessions) == 3 / 5
    assert status_breakdown(sessions) == {SampleStatus.COMPLETED: 4, SampleStatus.TASK_LIMIT_REACHED: 1}


def test_empty_metrics_are_zero():
    report = compute_metrics([])
    assert report.success_rate == 0.0
    assert report.session_count == 0 and report.max_input_tokens == 0


@given(st.lists(st.tuples(st.booleans(), st.sampled_from(list(SampleStatus)[1:])), max_size=30))
def test_rate_matches_count(spec):
    sessions = [make_session(reward=int(r and s is SampleStatus.COMPLETED), status=s) for r, s in spec]
    expected = sum(s.reward for s in sessions) / len(sessions) if sessions else 0.0
    assert success_rate(sessions) == expected
    assert sum(status_breakdown(sessions).values()) == len(sessions)


def test_per_skill_success_and_tokens():
    a = make_session("a", reward=1, skills=("select", "limit_only"))
    b = make_session("b", reward=0, skills=("select",))
    a.record_prompt(10)
    a.record_prompt(30)
    b.record_prompt(5)
    report = compute_metrics([a, b])
    assert report.per_skill_success == {"select": (1, 2), "limit_only": (1, 1)}
    assert report.avg_input_tokens == 22.5
    assert report.max_input_tokens == 30


@pytest.mark.parametrize(
    "changes,fragment",
    [
        ({"task_id": ""}, "non-empty"),
        ({"skills": []}, "skills must be non-empty"),
        ({"skills": ["select", "select"]}, "duplicate"),
        ({"skills": ["grep"]}, "invalid for DB"),
        ({"ground_truth": {"rows": [], "digest": "x"}}, "exactly one"),
        ({"difficulty": "extreme"}, "easy/medium/hard"),
    ],
)
def test_task_validation_rejects(changes, fragment):
    with pytest.raises(DatasetError, match=fragment):
        db_task(**changes).validate()


def test_kg_difficulty_must_match_actions():
    task = TaskInstance("k", EnvKind.KG, "q", {}, {"answer": ["m.1"], "actions": ["a", "b", "c"]}, ("count",), 2)
    with pytest.raises(DatasetError, match="difficulty"):
        task.validate()


def test_from_dict_requires_exact_fields():
    with pytest.raises(DatasetError, match="exactly"):
        TaskInstance.from_dict({"task_id": "x"})


def test_user_message_must_be_non_empty():
    with pytest.raises(ValueError):
        ChatMessage(Role.USER, "")
    ChatMessage(Role.AGENT, "")


def test_history_alternation():
    h = ChatHistory()
    h.append(Role.USER, "a")
    h.append(Role.AGENT, "b")
    h.validate()
    h.append(Role.AGENT, "c")
    with pytest.raises(ValueError, match="alternate"):
        h.validate()


def test_session_invariants():
    make_session(reward=1).check(round_limit=1)
    bad = make_session(reward=1)
    bad.outcome = Outcome.INCORRECT
    with pytest.raises(AssertionError):
        bad.check()
    over = make_session()
    with pytest.raises(AssertionError):
        over.check(round_limit=0)


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40)


@given(st.lists(texts, min_size=1, max_size=6), st.integers(0, 3), st.booleans())
def test_session_json_round_trip(contents, start, correct):
    history = ChatHistory()
    for i, text in enumerate(contents):
        history.append(Role.USER if i % 2 == 0 else Role.AGENT, text)
    history.task_start = min(start, len(contents))
    s = make_session(reward=int(correct))
    s.history = history
    s.record_prompt(count_history_tokens(history))
    line = session_line(s, "2024-01-01T00:00:00Z")
    assert line.endswith("\n") and "\n" not in line[:-1]
    back = Session.from_dict(json.loads(line))
    assert back == s


def test_task_file_round_trip(tmp_path):
    tasks = [db_task(task_id=f"db-{i}") for i in range(3)]
    dump_tasks(tasks, tmp_path / "t.jsonl")
    assert load_tasks(tmp_path / "t.jsonl") == tasks


def test_malformed_lines_are_located(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text(session_line(make_session()) + "{oops\n")
    with pytest.raises(DatasetError, match=r"s\.jsonl:2: malformed JSON"):
        load_sessions(path)
    path.write_text('{"task_id": "x"}\n')
    with pytest.raises(DatasetError, match=":1: malformed session"):
        load_sessions(path)
