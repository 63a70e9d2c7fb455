from __future__ import annotations

from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import KGOracle, same_multiset

from lifelong_harness.agent import ActionKind, KGCall, ParsedAction
from lifelong_harness.core import ChatHistory, EnvKind, Outcome, SampleStatus, Session, TaskInstance, load_tasks
from lifelong_harness.environments import DBEnvironment, MockExecBackend, OSEnvironment
from lifelong_harness.environments.db import (
    SqliteBackend,
    create_table,
    parse_rows,
    render_rows,
    rows_equal,
    state_digest,
    table_digest,
)
from lifelong_harness.environments.kg import KGEnvironment, KGVariable, TripleStore, VariableTable, kg_apply
from lifelong_harness.environments.os_env import Effect, MockInstance, truncate_output
from lifelong_harness.errors import ContractViolation, DatasetError, EnvironmentFailure

from conftest import DEMO

cells = st.one_of(
    st.none(),
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(alphabet="abc XYZ019'\"\\_-", max_size=8),
)
tables = st.lists(st.tuples(cells, cells), min_size=0, max_size=8)


def session_for(task: TaskInstance) -> Session:
    return Session(task.task_id, task.env_kind, task.skills, task.difficulty, ChatHistory())


# -- DB ------------------------------------------------------------------------


@given(tables, st.randoms())
def test_digest_is_order_insensitive(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    assert state_digest(rows) == state_digest(shuffled)


exact_cells = st.one_of(st.none(), st.integers(-5, 5), st.decimals(-5, 5, places=2), st.sampled_from(["", "a", "1", "a b"]))
exact_tables = st.lists(st.tuples(exact_cells, exact_cells), max_size=5)


@given(exact_tables, exact_tables)
def test_digest_equality_matches_multiset_oracle(a, b):
    assert (state_digest(a) == state_digest(b)) == same_multiset(a, b)


def test_digest_numeric_forms_coincide():
    assert state_digest([(1, "a")]) == state_digest([(Decimal("1"), "a")])
    assert state_digest([(Decimal("2.50"),)]) == state_digest([(Decimal("2.5"),)])
    assert state_digest([(None,)]) != state_digest([("",)])
    assert state_digest([("a", "b")]) != state_digest([("ab", "")])


@given(tables)
def test_render_parse_round_trip(rows):
    rows = [r for r in rows]
    parsed = parse_rows(render_rows(rows))
    assert rows_equal(parsed, rows)


def test_parse_rows_tolerance():
    parsed = parse_rows("[('a', Decimal('1.50'))]")
    assert rows_equal(parsed, [("a", Decimal("1.5"))])
    assert parse_rows("(1, 'a')") == [(1, "a")]
    assert parse_rows("42") == [(42,)]
    assert parse_rows("[1, 2]") == [(1,), (2,)]
    for bad in ("", "[(", "{'a': 1}", "[(object(),)]"):
        with pytest.raises(ValueError):
            parse_rows(bad)


def test_rows_equal_is_order_and_value_exact():
    assert rows_equal([(1, "a"), (2, "b")], [(1.0, "a"), (Decimal("2"), "b")])
    assert not rows_equal([(1,), (2,)], [(2,), (1,)])
    assert not rows_equal([(1, "a")], [("a", 1)])
    assert not rows_equal([("1",)], [(1,)])


def test_render_rows_format():
    assert render_rows([(1, "a"), (None,)]) == '[(1, "a"), (None,)]'
    assert render_rows([]) == "[]"


def test_table_setup_and_digest():
    backend = SqliteBackend()
    create_table(backend, {"table": "t", "headers": ["a", "b"], "rows": [[1, "x"], [2, None]]})
    assert table_digest(backend, "t") == state_digest([(2, None), (1, "x")])
    result = backend.execute("SELECT nope FROM t")
    assert not result.ok and "nope" in result.error


def test_db_environment_digest_task():
    task = next(t for t in load_tasks(DEMO / "db" / "tasks.jsonl") if "digest" in t.ground_truth)
    env = DBEnvironment()
    env.reset(task)
    env.interact(ParsedAction(ActionKind.DB_OPERATION, task.ground_truth["sql"]))
    env.interact(ParsedAction(ActionKind.DB_ANSWER, "done"))
    assert env.complete(session_for(task)) == 1
    env.reset(task)
    assert env.complete(session_for(task)) == 0  # untouched table
    env.release()


def test_db_environment_sql_error_is_an_observation():
    task = load_tasks(DEMO / "db" / "tasks.jsonl")[0]
    env = DBEnvironment()
    history = env.reset(task)
    assert task.setup["table"] in history.messages[-1].content
    observation = env.interact(ParsedAction(ActionKind.DB_OPERATION, "SELECT * FROM missing"))
    assert not observation.finished and "missing" in observation.observation
    env.abort()


def test_contract_violations():
    task = load_tasks(DEMO / "db" / "tasks.jsonl")[0]
    env = DBEnvironment()
    with pytest.raises(ContractViolation):
        env.interact(ParsedAction(ActionKind.DB_ANSWER, "[]"))
    with pytest.raises(ContractViolation):
        env.complete(session_for(task))
    env.reset(task)
    with pytest.raises(ContractViolation):
        env.reset(task)
    with pytest.raises(ContractViolation):
        env.interact(ParsedAction(ActionKind.OS_FINISH))
    env.complete(session_for(task))
    os_task = load_tasks(DEMO / "os" / "tasks.jsonl")[0]
    with pytest.raises(ContractViolation):
        env.reset(os_task)
    env.release()
    with pytest.raises(ContractViolation):
        env.reset(task)


def test_calculate_metric_by_difficulty():
    sessions = [
        Session("a", EnvKind.DB, ("select",), "hard", ChatHistory(), SampleStatus.COMPLETED, Outcome.CORRECT, 1, 1),
        Session("b", EnvKind.DB, ("select",), "easy", ChatHistory(), SampleStatus.COMPLETED, Outcome.INCORRECT, 0, 1),
    ]
    metric = DBEnvironment().calculate_metric(sessions)
    assert list(metric["by_difficulty"]) == ["easy", "hard"]
    assert metric["success_rate"] == 0.5
    assert DBEnvironment().calculate_metric([]) == {}


# -- OS ------------------------------------------------------------------------


@given(st.text(max_size=300), st.integers(1, 100))
def test_truncate_output_bounds(text, limit):
    out = truncate_output(text, limit)
    if len(text) <= limit:
        assert out == text
    else:
        head, tail = limit // 2, limit - limit // 2
        assert out.startswith(text[:head]) and out.endswith(text[len(text) - tail:])
        assert f"...{len(text) - limit} characters is omitted..." in out


def test_mock_shell_builtins():
    sh = MockInstance()
    assert sh.run("mkdir -p /tmp/d && cd /tmp/d && pwd").stdout == "/tmp/d\n"
    sh.run("echo hello > f.txt; echo world >> f.txt")
    assert sh.run("cat /tmp/d/f.txt").stdout == "hello\nworld\n"
    assert sh.run("cat f.txt | grep wor").stdout == "world\n"
    assert sh.run("wc -l < f.txt").stdout.strip() == "2"
    assert sh.run("false || echo recovered").stdout == "recovered\n"
    assert sh.run("test -f f.txt").exit_code == 0
    assert sh.run("[ -d /tmp/nothing ]").exit_code == 1
    assert sh.run("frobnicate").exit_code == 127
    assert sh.run("exit 3").exit_code == 3
    sh.run("chmod 755 f.txt")
    assert sh.run("stat -c %a f.txt").stdout.strip() == "755"


def test_effects_and_destroy():
    sh = MockInstance([Effect("^hostname$", "box\n"), Effect("^make", "x" * 3, stdout_repeat=2, exit_code=2)])
    assert sh.run("hostname").stdout == "box\n"
    result = sh.run("make all")
    assert result.stdout == "xxxxxx" and result.exit_code == 2
    sh.destroy()
    with pytest.raises(EnvironmentFailure):
        sh.run("true")


def test_os_environment_episode_and_isolation():
    backend = MockExecBackend()
    env = OSEnvironment(backend, observation_limit=50)
    task = TaskInstance(
        "os-t", EnvKind.OS, "create /tmp/x", {"init": "mkdir -p /tmp/w"}, {"evaluation": "test -f /tmp/x"}, ("touch",)
    )
    env.reset(task)
    obs = env.interact(ParsedAction(ActionKind.OS_BASH, "touch /tmp/x"))
    assert obs.observation.startswith("The output of the OS:")
    assert env.interact(ParsedAction(ActionKind.OS_FINISH)).finished
    assert env.complete(session_for(task)) == 1
    env.reset(task)
    assert env.complete(session_for(task)) == 0  # fresh instance per task
    assert len(backend.instances) == 2 and all(i.destroyed for i in backend.instances)


def test_os_setup_failure_is_environment_failure():
    env = OSEnvironment()
    task = TaskInstance("os-f", EnvKind.OS, "q", {"init": "exit 1"}, {"evaluation": "true"}, ("exit",))
    with pytest.raises(EnvironmentFailure):
        env.reset(task)


def test_os_observation_is_truncated():
    env = OSEnvironment(MockExecBackend([{"match": "^yes", "stdout": "y\n", "stdout_repeat": 1000}]), observation_limit=40)
    task = TaskInstance("os-y", EnvKind.OS, "q", {}, {"evaluation": "true"}, ("echo",))
    env.reset(task)
    obs = env.interact(ParsedAction(ActionKind.OS_BASH, "yes")).observation
    assert "1960 characters is omitted" in obs
    env.abort()


# -- KG ------------------------------------------------------------------------

entity = st.sampled_from([f"m.{i}" for i in range(6)])
relation = st.sampled_from(["r.a", "r.b"])
attr = st.sampled_from(["v.x", "v.y"])


@st.composite
def kg_case(draw):
    triples = draw(st.lists(st.tuples(entity, relation, entity), max_size=20, unique=True))
    values = draw(st.dictionaries(st.tuples(entity, attr), st.integers(0, 3), max_size=8))
    steps = draw(st.lists(st.tuples(st.sampled_from(["get_neighbors", "intersection", "argmax", "argmin", "count",
                                                     "get_relations", "get_attributes"]),
                                    st.integers(0, 5), st.integers(0, 5), st.booleans()), min_size=1, max_size=6))
    return triples, values, steps


@given(kg_case())
def test_kg_apply_matches_oracle(case):
    triples, values, steps = case
    store, oracle, table = TripleStore(triples, values), KGOracle(triples, values), VariableTable()
    for name, i, j, use_var in steps:
        n = len(table)
        first = f"#{i % n}" if use_var and n else f"m.{i}"
        second = {"get_neighbors": ["r.a", "r.b"][j % 2], "intersection": f"#{j % n}" if n else f"m.{j}",
                  "argmax": ["v.x", "v.y"][j % 2], "argmin": ["v.x", "v.y"][j % 2]}.get(name)
        args = (first,) if second is None else (first, second)
        got = kg_apply(KGCall(name, args), store, table)
        want = oracle.apply(name, args)
        if isinstance(got, KGVariable):
            assert (got.name, got.entities) == (want, oracle.variables[-1])
        else:
            assert got == want


def test_kg_undefined_variable_is_reported_not_raised():
    task = load_tasks(DEMO / "kg" / "tasks.jsonl")[0]
    env = KGEnvironment(TripleStore.from_tsv(DEMO / "kg" / "store.tsv"))
    env.reset(task)
    obs = env.interact(ParsedAction(ActionKind.KG_ACTION, KGCall("count", ("#4",))))
    assert obs.observation.startswith("Error:") and "#4" in obs.observation
    env.abort()


def test_kg_ground_truth_replay_solves_demo_tasks():
    from lifelong_harness.agent.parsing import parse_kg_call

    store = TripleStore.from_tsv(DEMO / "kg" / "store.tsv")
    env = KGEnvironment(store)
    for task in load_tasks(DEMO / "kg" / "tasks.jsonl"):
        env.reset(task)
        for text in task.ground_truth["actions"]:
            env.interact(ParsedAction(ActionKind.KG_ACTION, parse_kg_call(text)))
        final = f"#{len(env.variables) - 1}" if "answer" in task.ground_truth else str(task.ground_truth["count"])
        env.interact(ParsedAction(ActionKind.KG_ANSWER, final))
        assert env.complete(session_for(task)) == 1, task.task_id


def test_tsv_loading(tmp_path):
    path = tmp_path / "s.tsv"
    path.write_text("# comment\nm.1\tr.a\tm.2\nm.1\tv.n\t3\nm.2\tv.n\t2.5\n\n")
    store = TripleStore.from_tsv(path)
    assert store.neighbors("m.1", "r.a") == {"m.2"}
    assert store.attributes_of("m.1") == {"v.n": 3}
    assert store.attributes_of("m.2") == {"v.n": 2.5}
    path.write_text("m.1\tr.a\n")
    with pytest.raises(DatasetError, match=":1:"):
        TripleStore.from_tsv(path)
