"""Execution-based verification of generated task candidates."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from ..agent.parsing import parse_kg_call, split_sql_statements
from ..core import SKILL_SETS, EnvKind, TaskInstance
from ..environments.base import Environment
from ..environments.db import (
    DBEnvironment,
    SqliteBackend,
    create_table,
    rows_equal,
    state_digest,
    table_rows,
)
from ..environments.kg import KGEnvironment, KGError, KGVariable, TripleStore, VariableTable, kg_apply
from ..environments.os_env import MockExecBackend, OSEnvironment
from ..errors import DatasetError, EnvironmentFailure
from .sampling import SKILL_ORDER
from .sexpr import TAGGED_KG_SKILLS
from .sqlskills import detect_db_skills


class RejectReason(str, Enum):
    MALFORMED = "malformed"
    UNKNOWN_SKILL = "unknown_skill"
    SKILL_ABSENT = "skill_absent"
    SETUP_FAILED = "setup_failed"
    EXECUTION_ERROR = "execution_error"
    ANSWER_MISMATCH = "answer_mismatch"
    NO_EFFECT = "no_effect"
    TRIVIALLY_PASSING = "trivially_passing"
    EVALUATION_FAILED = "evaluation_failed"
    EMPTY_ANSWER = "empty_answer"
    INVALID_TASK = "invalid_task"


@dataclass(frozen=True)
class Candidate:
    """An unverified task proposal.

    ``solution`` is the ground-truth SQL statement, shell script, or list of
    rendered KG actions. ``expected`` carries whatever the proposer claims
    about the outcome (rows, digest, evaluation script, answer or count).
    """

    task_id: str
    env_kind: EnvKind
    instruction: str
    setup: dict[str, Any]
    solution: Any
    expected: dict[str, Any] = field(default_factory=dict)
    skills: tuple[str, ...] = ()
    difficulty: str | int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "env_kind", EnvKind(self.env_kind))
        object.__setattr__(self, "skills", tuple(self.skills))

    @classmethod
    def from_task(cls, task: TaskInstance) -> Candidate:
        """Rebuild the candidate an accepted task came from (for re-verification)."""
        gt = dict(task.ground_truth)
        if task.env_kind is EnvKind.DB:
            solution = gt.pop("sql")
        elif task.env_kind is EnvKind.OS:
            solution = gt.pop("solution")
        else:
            solution = list(gt.pop("actions"))
        return cls(task.task_id, task.env_kind, task.instruction, task.setup, solution, gt, task.skills, task.difficulty)


@dataclass(frozen=True)
class Verdict:
    task: TaskInstance | None = None
    reason: RejectReason | None = None
    detail: str = ""

    @property
    def accepted(self) -> bool:
        return self.task is not None


def reject(reason: RejectReason, detail: str = "") -> Verdict:
    return Verdict(None, reason, detail)


_COMMAND_SPLIT = re.compile(r"\|\||&&|[;|&\n]|\$\(|`|\bthen\b|\bdo\b|\belse\b")
_ASSIGNMENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*=")


def detect_os_commands(script: str) -> set[str]:
    """Command names in command position, including ``find -exec`` and ``xargs`` targets."""
    found: set[str] = set()
    for segment in _COMMAND_SPLIT.split(script):
        words = segment.replace("(", " ").replace("{", " ").split()
        while words and (_ASSIGNMENT.match(words[0]) or words[0] in ("sudo", "!", "if", "while", "until")):
            words.pop(0)
        if words:
            found.add(words[0].rsplit("/", 1)[-1])
        for i, w in enumerate(words[:-1]):
            if w in ("-exec", "-execdir", "xargs"):
                found.add(words[i + 1].rsplit("/", 1)[-1])
    return found


def _check_skills(candidate: Candidate, present: set[str]) -> Verdict | None:
    if not candidate.skills:
        return reject(RejectReason.MALFORMED, "no skills claimed")
    unknown = [s for s in candidate.skills if s not in SKILL_SETS[candidate.env_kind]]
    if unknown:
        return reject(RejectReason.UNKNOWN_SKILL, ", ".join(unknown))
    missing = [s for s in candidate.skills if s not in present]
    if missing:
        return reject(RejectReason.SKILL_ABSENT, ", ".join(missing))
    return None


def _tags(candidate: Candidate, present: set[str]) -> tuple[str, ...]:
    """Claimed skills plus every other vocabulary skill the ground truth exercises."""
    vocab = TAGGED_KG_SKILLS if candidate.env_kind is EnvKind.KG else SKILL_ORDER[candidate.env_kind]
    keep = set(candidate.skills) | (present & set(vocab))
    return tuple(s for s in vocab if s in keep)


def _finish(candidate: Candidate, setup: dict[str, Any], ground_truth: dict[str, Any], present: set[str]) -> Verdict:
    task = TaskInstance(
        candidate.task_id,
        candidate.env_kind,
        candidate.instruction,
        setup,
        ground_truth,
        _tags(candidate, present),
        candidate.difficulty,
    )
    try:
        task.validate()
    except DatasetError as exc:
        return reject(RejectReason.INVALID_TASK, str(exc))
    return Verdict(task)


def _jsonable_rows(rows: list[tuple]) -> list[list[Any]]:
    return [list(r) for r in rows]


def _validate_db(candidate: Candidate, environment: Environment | None) -> Verdict:
    setup = candidate.setup
    if not isinstance(candidate.solution, str) or not {"table", "headers"} <= set(setup):
        return reject(RejectReason.MALFORMED, "DB candidates need a SQL string and a table with headers")
    statements = split_sql_statements(candidate.solution)
    if len(statements) != 1:
        return reject(RejectReason.MALFORMED, f"expected one SQL statement, got {len(statements)}")
    sql = statements[0]
    try:
        present = detect_db_skills(sql)
    except ValueError as exc:
        return reject(RejectReason.MALFORMED, str(exc))
    verdict = _check_skills(candidate, present)
    if verdict is not None:
        return verdict

    own_backend = not isinstance(environment, DBEnvironment)
    backend = SqliteBackend() if own_backend else environment.backend  # type: ignore[union-attr]
    table = setup["table"]
    try:
        try:
            create_table(backend, setup)
        except (EnvironmentFailure, KeyError, TypeError, ValueError) as exc:
            return reject(RejectReason.SETUP_FAILED, str(exc))
        before = state_digest(table_rows(backend, table))
        result = backend.execute(sql)
        if not result.ok:
            return reject(RejectReason.EXECUTION_ERROR, result.error or "")
        expected = candidate.expected
        if result.rows is not None:
            if "rows" not in expected:
                return reject(RejectReason.MALFORMED, "query candidate without claimed rows")
            claimed = [tuple(r) for r in expected["rows"]]
            if not rows_equal(result.rows, claimed):
                return reject(RejectReason.ANSWER_MISMATCH, f"query produced {len(result.rows)} rows")
            ground_truth = {"sql": sql, "rows": _jsonable_rows(result.rows)}
        else:
            digest = state_digest(table_rows(backend, table))
            if digest == before:
                return reject(RejectReason.NO_EFFECT, "statement left the table unchanged")
            if "digest" in expected and expected["digest"] != digest:
                return reject(RejectReason.ANSWER_MISMATCH, "table digest differs from the claim")
            ground_truth = {"sql": sql, "digest": digest}
    finally:
        backend.execute(f"DROP TABLE IF EXISTS {backend.quote_ident(table)}")
        if own_backend:
            backend.close()
    return _finish(candidate, dict(setup), ground_truth, present)


def _validate_os(candidate: Candidate, environment: Environment | None) -> Verdict:
    evaluation = candidate.expected.get("evaluation")
    if not isinstance(candidate.solution, str) or not isinstance(evaluation, str) or not evaluation.strip():
        return reject(RejectReason.MALFORMED, "OS candidates need a solution script and an evaluation script")
    present = detect_os_commands(candidate.solution)
    verdict = _check_skills(candidate, present)
    if verdict is not None:
        return verdict
    backend = environment.backend if isinstance(environment, OSEnvironment) else MockExecBackend()
    init = candidate.setup.get("init", "")

    def fresh():
        instance = backend.fresh()
        if init:
            result = instance.run(init)
            if result.exit_code != 0:
                instance.destroy()
                return None, result.exit_code
        return instance, 0

    try:
        instance, code = fresh()
        if instance is None:
            return reject(RejectReason.SETUP_FAILED, f"init exited {code}")
        try:
            if instance.run(evaluation).exit_code == 0:
                return reject(RejectReason.TRIVIALLY_PASSING, "evaluation passes without the solution")
        finally:
            instance.destroy()
        instance, code = fresh()
        if instance is None:
            return reject(RejectReason.SETUP_FAILED, f"init exited {code}")
        try:
            solved = instance.run(candidate.solution)
            if solved.exit_code != 0:
                return reject(RejectReason.EXECUTION_ERROR, f"solution exited {solved.exit_code}")
            checked = instance.run(evaluation)
            if checked.exit_code != 0:
                return reject(RejectReason.EVALUATION_FAILED, f"evaluation exited {checked.exit_code}")
        finally:
            instance.destroy()
    except EnvironmentFailure as exc:
        return reject(RejectReason.SETUP_FAILED, str(exc))
    setup = {"init": init} if init else {}
    return _finish(candidate, setup, {"solution": candidate.solution, "evaluation": evaluation}, present)


def replay_actions(actions: list[str], store: TripleStore) -> frozenset[str] | int | list[str]:
    """Run rendered actions through :func:`kg_apply`; returns the last observation's value."""
    variables = VariableTable()
    last: Any = None
    for text in actions:
        call = parse_kg_call(text)
        if call is None or call.render() != text.replace(" ", ""):
            raise KGError(f"malformed action {text!r}")
        last = kg_apply(call, store, variables)
    if isinstance(last, KGVariable):
        return last.entities
    return last


def _validate_kg(candidate: Candidate, environment: Environment | None, store: TripleStore | None) -> Verdict:
    if store is None and isinstance(environment, KGEnvironment):
        store = environment.store
    if store is None:
        raise ValueError("KG validation needs a triple store")
    actions = candidate.solution
    if not isinstance(actions, (list, tuple)) or not all(isinstance(a, str) for a in actions) or not actions:
        return reject(RejectReason.MALFORMED, "KG candidates need a list of rendered actions")
    names = {a.split("(", 1)[0].strip() for a in actions}
    verdict = _check_skills(candidate, names)
    if verdict is not None:
        return verdict
    try:
        outcome = replay_actions(list(actions), store)
    except KGError as exc:
        return reject(RejectReason.EXECUTION_ERROR, str(exc))
    expected = candidate.expected
    if isinstance(outcome, int):
        if "answer" in expected or ("count" in expected and int(expected["count"]) != outcome):
            return reject(RejectReason.ANSWER_MISMATCH, f"replay counted {outcome}")
        ground_truth: dict[str, Any] = {"count": outcome}
    elif isinstance(outcome, frozenset):
        if not outcome:
            return reject(RejectReason.EMPTY_ANSWER, "replay produced an empty entity set")
        if "count" in expected or ("answer" in expected and frozenset(expected["answer"]) != outcome):
            return reject(RejectReason.ANSWER_MISMATCH, f"replay produced {len(outcome)} entities")
        ground_truth = {"answer": sorted(outcome)}
    else:
        return reject(RejectReason.MALFORMED, "the last action does not produce an answer")
    ground_truth["actions"] = list(actions)
    difficulty = candidate.difficulty if candidate.difficulty is not None else len(actions)
    candidate = Candidate(**{**candidate.__dict__, "difficulty": difficulty})
    return _finish(candidate, dict(candidate.setup), ground_truth, names)


def validate_task(
    candidate: Candidate, environment: Environment | None = None, *, store: TripleStore | None = None
) -> Verdict:
    """Execute the candidate's ground truth in a fresh instance and accept or reject it.

    ``environment`` supplies the backend (SQL connection, shell backend or
    triple store); without one an embedded SQLite database or the mock shell
    is used. KG candidates need ``store`` or a KG environment.
    """
    if candidate.env_kind is EnvKind.DB:
        return _validate_db(candidate, environment)
    if candidate.env_kind is EnvKind.OS:
        return _validate_os(candidate, environment)
    return _validate_kg(candidate, environment, store)
