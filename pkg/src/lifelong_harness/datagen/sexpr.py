"""Conversion of graph-query S-expressions into seven-action sequences.

Supported forms (anything else raises :class:`UnsupportedExpression`)::

    entity                      m.xxx / g.xxx literal
    (JOIN (R rel) X), (JOIN rel X)
    (AND X Y)                   a bare class name operand is dropped
    (COUNT X)
    (ARGMAX X attr), (ARGMIN X attr)

Children are emitted before their parent (post-order), so variable numbers
follow the order in which sub-results are first produced.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Union

from ..agent.parsing import KGCall

SExpr = Union[str, list["SExpr"]]

_ENTITY = re.compile(r"^[mg]\.[A-Za-z0-9_]+$")
_RELATION = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)+$")
TAGGED_KG_SKILLS = ("get_neighbors", "intersection", "argmax", "argmin", "count")


class UnsupportedExpression(ValueError):
    pass


def parse_sexpr(text: str) -> SExpr:
    tokens = re.findall(r"\(|\)|[^\s()]+", text)
    if not tokens:
        raise UnsupportedExpression("empty expression")
    pos = 0

    def node() -> SExpr:
        nonlocal pos
        if pos >= len(tokens):
            raise UnsupportedExpression("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise UnsupportedExpression("unexpected ')'")
        if tok != "(":
            return tok
        items: list[SExpr] = []
        while pos < len(tokens) and tokens[pos] != ")":
            items.append(node())
        if pos >= len(tokens):
            raise UnsupportedExpression("unbalanced '('")
        pos += 1
        return items

    tree = node()
    if pos != len(tokens):
        raise UnsupportedExpression("trailing tokens after expression")
    return tree


def is_entity(token: SExpr) -> bool:
    return isinstance(token, str) and bool(_ENTITY.match(token))


def is_relation(token: SExpr) -> bool:
    return isinstance(token, str) and bool(_RELATION.match(token)) and not is_entity(token)


@dataclass
class _Emitter:
    calls: list[KGCall]
    next_var: int = 0

    def emit(self, name: str, *args: str) -> str | None:
        self.calls.append(KGCall(name, args))
        if name in ("get_relations", "get_attributes", "count"):
            return None
        var = f"#{self.next_var}"
        self.next_var += 1
        return var


def _operand(expr: SExpr, out: _Emitter) -> str:
    """Emit the actions for ``expr`` and return the entity or variable that holds it."""
    if isinstance(expr, str):
        if is_entity(expr):
            return expr
        raise UnsupportedExpression(f"unsupported literal {expr!r}")
    if not expr or not isinstance(expr[0], str):
        raise UnsupportedExpression("expected an operator")
    op, args = expr[0].upper(), expr[1:]
    if op == "JOIN" and len(args) == 2:
        rel = args[0]
        if isinstance(rel, list) and len(rel) == 2 and rel[0] == "R":
            rel = rel[1]
        if not is_relation(rel):
            raise UnsupportedExpression(f"unsupported relation {rel!r}")
        source = _operand(args[1], out)
        out.emit("get_relations", source)
        return out.emit("get_neighbors", source, str(rel))  # type: ignore[return-value]
    if op == "AND" and len(args) == 2:
        operands = [a for a in args if not (isinstance(a, str) and is_relation(a))]
        if len(operands) == 1:
            return _operand(operands[0], out)
        if len(operands) != 2:
            raise UnsupportedExpression("AND needs at least one non-class operand")
        left = _operand(operands[0], out)
        right = _operand(operands[1], out)
        return out.emit("intersection", left, right)  # type: ignore[return-value]
    if op in ("ARGMAX", "ARGMIN") and len(args) == 2:
        if not is_relation(args[1]):
            raise UnsupportedExpression(f"unsupported attribute {args[1]!r}")
        source = _operand(args[0], out)
        out.emit("get_attributes", source)
        return out.emit(op.lower(), source, str(args[1]))  # type: ignore[return-value]
    raise UnsupportedExpression(f"unsupported form {op} with {len(args)} operands")


def sexpr_to_actions(text: str) -> list[KGCall]:
    tree = parse_sexpr(text)
    out = _Emitter([])
    if isinstance(tree, list) and tree and tree[0] == "COUNT":
        if len(tree) != 2:
            raise UnsupportedExpression("COUNT takes one operand")
        out.emit("count", _operand(tree[1], out))
    else:
        if is_entity(tree):
            raise UnsupportedExpression("a bare entity is not a query")
        _operand(tree, out)
    return out.calls


def action_skills(actions: list[KGCall] | list[str]) -> tuple[str, ...]:
    """Skill tags of an action sequence.

    Exploration-only actions (relation and attribute listing) are not tagged.
    """
    names = {a.name if isinstance(a, KGCall) else a.split("(", 1)[0] for a in actions}
    return tuple(sorted(names & set(TAGGED_KG_SKILLS)))


def convert_record(record: dict[str, Any]) -> dict[str, Any]:
    """Map a question-answering record to the candidate fields of a KG task.

    Expected keys: ``qid``, ``question``, ``s_expression`` and ``entities``
    (name -> id).
    """
    calls = sexpr_to_actions(record["s_expression"])
    return {
        "task_id": str(record["qid"]),
        "instruction": record["question"],
        "setup": {"entities": dict(record.get("entities", {}))},
        "actions": [c.render() for c in calls],
        "skills": action_skills(calls),
        "difficulty": len(calls),
    }
