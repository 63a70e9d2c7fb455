"""Per-environment action parsers.

Parsing is total: every string maps to exactly one :class:`ParsedAction`.
Malformed or ambiguous replies become ``invalid`` with a diagnostic payload.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from ..core import EnvKind


class ActionKind(str, Enum):
    DB_OPERATION = "db_operation"
    DB_ANSWER = "db_answer"
    OS_BASH = "os_bash"
    OS_FINISH = "os_finish"
    KG_ACTION = "kg_action"
    KG_ANSWER = "kg_answer"
    INVALID = "invalid"


KG_ARITY: dict[str, int] = {
    "get_relations": 1,
    "get_neighbors": 2,
    "intersection": 2,
    "get_attributes": 1,
    "argmax": 2,
    "argmin": 2,
    "count": 1,
}


@dataclass(frozen=True)
class KGCall:
    name: str
    args: tuple[str, ...]

    def render(self) -> str:
        return f"{self.name}({','.join(self.args)})"


@dataclass(frozen=True)
class ParsedAction:
    kind: ActionKind
    payload: str | KGCall = ""

    @property
    def valid(self) -> bool:
        return self.kind is not ActionKind.INVALID


def invalid(reason: str) -> ParsedAction:
    return ParsedAction(ActionKind.INVALID, reason)


DB_OPERATION_MARKER = "Action: Operation"
DB_ANSWER_MARKER = "Action: Answer"
FINAL_ANSWER_MARKER = "Final Answer:"
OS_BASH_MARKER = "Act: bash"
OS_FINISH_MARKER = "Act: finish"

_SQL_BLOCK = re.compile(r"```sql[ \t]*\n(.*?)```", re.S)
_BASH_BLOCK = re.compile(r"```bash[ \t]*\n(.*?)```", re.S)
_KG_CALL = re.compile(r"\b(" + "|".join(KG_ARITY) + r")\(([^()]*)\)")


def split_sql_statements(sql: str) -> list[str]:
    """Split on semicolons that sit outside quoted literals and identifiers."""
    parts, buf, quote = [], [], None
    i = 0
    while i < len(sql):
        ch = sql[i]
        if quote:
            buf.append(ch)
            if ch == "\\" and quote != "`" and i + 1 < len(sql):
                buf.append(sql[i + 1])
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"`":
            quote = ch
            buf.append(ch)
        elif ch == ";":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf))
    return [p.strip() for p in parts if p.strip()]


def _parse_db(text: str) -> ParsedAction:
    has_op = DB_OPERATION_MARKER in text
    has_answer = DB_ANSWER_MARKER in text
    if has_op and has_answer:
        return invalid("both Operation and Answer markers present")
    if has_op:
        rest = text[text.index(DB_OPERATION_MARKER) + len(DB_OPERATION_MARKER):]
        block = _SQL_BLOCK.search(rest)
        if block is None:
            return invalid("Operation without a fenced sql block")
        sql = block.group(1).strip()
        statements = split_sql_statements(sql)
        if not statements:
            return invalid("empty sql block")
        if len(statements) > 1:
            return invalid(f"{len(statements)} statements in one sql block")
        return ParsedAction(ActionKind.DB_OPERATION, sql)
    if has_answer:
        rest = text[text.index(DB_ANSWER_MARKER) + len(DB_ANSWER_MARKER):]
        if FINAL_ANSWER_MARKER not in rest:
            return invalid("Answer without a Final Answer payload")
        payload = rest[rest.index(FINAL_ANSWER_MARKER) + len(FINAL_ANSWER_MARKER):].strip()
        return ParsedAction(ActionKind.DB_ANSWER, payload)
    return invalid("no action marker")


def _parse_os(text: str) -> ParsedAction:
    has_bash = OS_BASH_MARKER in text
    has_finish = OS_FINISH_MARKER in text
    if has_bash and has_finish:
        return invalid("both bash and finish markers present")
    if has_finish:
        return ParsedAction(ActionKind.OS_FINISH, "")
    if has_bash:
        rest = text[text.index(OS_BASH_MARKER) + len(OS_BASH_MARKER):]
        block = _BASH_BLOCK.search(rest)
        if block is None:
            return invalid("bash action without a fenced bash block")
        script = block.group(1).strip()
        if not script:
            return invalid("empty bash block")
        return ParsedAction(ActionKind.OS_BASH, script)
    return invalid("no action marker")


def parse_kg_call(text: str) -> KGCall | None:
    """First well-formed call to one of the seven actions, or ``None``."""
    for match in _KG_CALL.finditer(text):
        name = match.group(1)
        args = tuple(a.strip() for a in match.group(2).split(","))
        if len(args) == KG_ARITY[name] and all(args):
            return KGCall(name, args)
    return None


def _parse_kg(text: str) -> ParsedAction:
    call = parse_kg_call(text)
    if FINAL_ANSWER_MARKER in text:
        if call is not None:
            return invalid("both an action call and a Final Answer present")
        payload = text[text.index(FINAL_ANSWER_MARKER) + len(FINAL_ANSWER_MARKER):].strip()
        payload = payload.splitlines()[0].strip() if payload else ""
        if not payload:
            return invalid("empty Final Answer")
        return ParsedAction(ActionKind.KG_ANSWER, payload)
    if call is None:
        return invalid("no well-formed action call")
    return ParsedAction(ActionKind.KG_ACTION, call)


def parse_action(env_kind: EnvKind | str, text: str) -> ParsedAction:
    env_kind = EnvKind(env_kind)
    if env_kind is EnvKind.DB:
        return _parse_db(text)
    if env_kind is EnvKind.OS:
        return _parse_os(text)
    return _parse_kg(text)


def render_action(action: ParsedAction) -> str:
    """Canonical agent text for a well-formed action (inverse of parsing)."""
    kind, payload = action.kind, action.payload
    if kind is ActionKind.DB_OPERATION:
        return f"{DB_OPERATION_MARKER}\n```sql\n{payload}\n```"
    if kind is ActionKind.DB_ANSWER:
        return f"{DB_ANSWER_MARKER}\n{FINAL_ANSWER_MARKER} {payload}"
    if kind is ActionKind.OS_BASH:
        return f"{OS_BASH_MARKER}\n```bash\n{payload}\n```"
    if kind is ActionKind.OS_FINISH:
        return OS_FINISH_MARKER
    if kind is ActionKind.KG_ACTION:
        assert isinstance(payload, KGCall)
        return payload.render()
    if kind is ActionKind.KG_ANSWER:
        return f"{FINAL_ANSWER_MARKER} {payload}"
    raise ValueError("invalid actions have no rendering")
