"""Candidate generation through a chat-completions style generator."""

from __future__ import annotations

import json
import re
from typing import Any, Sequence

from ..agent.models import ChatModel
from ..core import ChatMessage, EnvKind, Role
from ..errors import AgentFailure, HarnessError
from .validation import Candidate

SKILLS_LINE = "Required skills: "

_TEMPLATES = {
    EnvKind.DB: (
        "Write one database task for a single-table SQL benchmark.\n"
        "{skills_line}\n"
        "The ground-truth SQL must be a single statement that uses every required skill.\n"
        "Reply with one JSON object and nothing else, using these keys:\n"
        '  "instruction": the natural-language request,\n'
        '  "setup": {{"table": name, "headers": [column names], "rows": [[cell values]]}},\n'
        '  "solution": the SQL statement,\n'
        '  "expected": {{"rows": [[result cells]]}} for a query, or {{}} for an INSERT, UPDATE or DELETE,\n'
        '  "difficulty": "easy", "medium" or "hard".'
    ),
    EnvKind.OS: (
        "Write one Linux shell task for a command-line benchmark.\n"
        "{skills_line}\n"
        "The ground-truth script must use every required command.\n"
        "Reply with one JSON object and nothing else, using these keys:\n"
        '  "instruction": the natural-language request,\n'
        '  "setup": {{"init": a script that prepares the machine}},\n'
        '  "solution": the ground-truth script,\n'
        '  "expected": {{"evaluation": a script that exits 0 exactly when the task is done}},\n'
        '  "difficulty": "easy", "medium" or "hard".'
    ),
}


class MalformedReply(ValueError):
    """The generator answered but the reply is not a usable candidate."""


class GeneratorUnavailable(HarnessError):
    """The generator endpoint kept failing after all retries."""


def generation_prompt(env_kind: EnvKind, skills: Sequence[str]) -> str:
    env_kind = EnvKind(env_kind)
    if env_kind not in _TEMPLATES:
        raise ValueError(f"{env_kind.value} tasks are ingested, not generated")
    return _TEMPLATES[env_kind].format(skills_line=SKILLS_LINE + ", ".join(skills))


def requested_skills(prompt: str) -> list[str]:
    """Inverse of the skills line in :func:`generation_prompt`."""
    for line in prompt.splitlines():
        if line.startswith(SKILLS_LINE):
            return [s.strip() for s in line[len(SKILLS_LINE):].split(",") if s.strip()]
    return []


_FENCE = re.compile(r"```(?:json)?[ \t]*\n(.*?)```", re.S)


def _extract_json(text: str) -> Any:
    fenced = _FENCE.search(text)
    body = fenced.group(1) if fenced else text
    start, end = body.find("{"), body.rfind("}")
    if start < 0 or end <= start:
        raise MalformedReply("no JSON object in reply")
    try:
        return json.loads(body[start : end + 1])
    except json.JSONDecodeError as exc:
        raise MalformedReply(f"invalid JSON: {exc}") from exc


def parse_candidate(env_kind: EnvKind, text: str, skills: Sequence[str], task_id: str) -> Candidate:
    data = _extract_json(text)
    if not isinstance(data, dict):
        raise MalformedReply("reply is not a JSON object")
    instruction, setup, solution = data.get("instruction"), data.get("setup"), data.get("solution")
    expected = data.get("expected", {})
    if not isinstance(instruction, str) or not instruction.strip():
        raise MalformedReply("missing instruction")
    if not isinstance(setup, dict) or not isinstance(expected, dict):
        raise MalformedReply("setup and expected must be objects")
    if not isinstance(solution, str) or not solution.strip():
        raise MalformedReply("missing solution")
    difficulty = data.get("difficulty")
    if difficulty is not None and not isinstance(difficulty, str):
        raise MalformedReply("difficulty must be a string")
    return Candidate(task_id, env_kind, instruction.strip(), setup, solution.strip(), expected, tuple(skills), difficulty)


def generate_candidate(
    generator: ChatModel,
    skills: Sequence[str],
    env_kind: EnvKind,
    *,
    task_id: str,
    retries: int = 2,
) -> Candidate:
    """Ask the generator for one task using ``skills``.

    Raises :class:`MalformedReply` for unusable replies and
    :class:`GeneratorUnavailable` once ``retries`` extra attempts have failed.
    """
    messages = (ChatMessage(Role.USER, generation_prompt(env_kind, skills)),)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            reply = generator.complete(messages, task_id=task_id, round_index=attempt)
        except (AgentFailure, HarnessError, OSError) as exc:
            last_error = exc
            continue
        return parse_candidate(env_kind, reply, skills, task_id)
    raise GeneratorUnavailable(f"generator failed {retries + 1} times: {last_error}")
