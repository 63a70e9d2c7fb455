"""Static detection of the SQL skills a statement exercises.

Clause-level skills (WHERE, GROUP BY, HAVING, ORDER BY, LIMIT, aliases) are
read from the outermost statement only; subqueries contribute the
``subquery_*`` labels and nothing else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

_TOKEN = re.compile(
    r"""
    (?P<str>'(?:[^'\\]|\\.|'')*'|"(?:[^"\\]|\\.|"")*")
  | (?P<ident>`[^`]*`)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*(?:\.[A-Za-z_][A-Za-z_0-9]*)*)
  | (?P<op><=|>=|<>|!=|[-+*/%<>=(),;.])
  | (?P<ws>\s+)
    """,
    re.X,
)

_CLAUSES = ("SELECT", "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET", "SET", "VALUES", "INTO")
_KEYWORDS = frozenset(
    _CLAUSES
    + ("BY", "AS", "AND", "OR", "NOT", "IN", "ON", "JOIN", "BETWEEN", "LIKE", "IS", "NULL", "ASC", "DESC")
    + ("INSERT", "UPDATE", "DELETE", "DISTINCT", "EXISTS", "UNION", "ALL", "CASE", "WHEN", "THEN", "ELSE", "END")
)
_AGGREGATES = frozenset({"COUNT", "SUM", "AVG", "MIN", "MAX"})
_ARITH = frozenset({"+", "-", "*", "/", "%"})


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str

    @property
    def upper(self) -> str:
        return self.text.upper() if self.kind == "word" else self.text


Node = Union[Tok, "Group"]


@dataclass
class Group:
    items: list[Node]

    @property
    def is_subquery(self) -> bool:
        return bool(self.items) and isinstance(self.items[0], Tok) and self.items[0].upper == "SELECT"


def tokenize(sql: str) -> list[Tok]:
    tokens, pos = [], 0
    while pos < len(sql):
        m = _TOKEN.match(sql, pos)
        if m is None:
            raise ValueError(f"unexpected character {sql[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup != "ws":
            tokens.append(Tok(m.lastgroup or "op", m.group()))
    return tokens


def parse_groups(tokens: list[Tok]) -> list[Node]:
    stack: list[list[Node]] = [[]]
    for tok in tokens:
        if tok.text == "(":
            stack.append([])
        elif tok.text == ")":
            if len(stack) == 1:
                raise ValueError("unbalanced parenthesis")
            inner = stack.pop()
            stack[-1].append(Group(inner))
        elif tok.text != ";":
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ValueError("unbalanced parenthesis")
    return stack[0]


def _is(node: Node, *words: str) -> bool:
    return isinstance(node, Tok) and node.upper in words


def split_clauses(nodes: list[Node]) -> dict[str, list[Node]]:
    """Top-level clause bodies keyed by their leading keyword."""
    clauses: dict[str, list[Node]] = {}
    current = None
    i = 0
    while i < len(nodes):
        node = nodes[i]
        if isinstance(node, Tok) and node.upper in _CLAUSES:
            current = node.upper
            clauses.setdefault(current, [])
            if current in ("GROUP", "ORDER") and i + 1 < len(nodes) and _is(nodes[i + 1], "BY"):
                i += 1
        elif current is not None:
            clauses[current].append(node)
        i += 1
    return clauses


def _top_level_connectives(nodes: list[Node]) -> int:
    count, after_between = 0, False
    for node in nodes:
        if _is(node, "BETWEEN"):
            after_between = True
        elif _is(node, "AND") and after_between:
            after_between = False
        elif _is(node, "AND", "OR"):
            count += 1
    return count


def _has_boolean_group(nodes: list[Node]) -> bool:
    for node in nodes:
        if isinstance(node, Group) and not node.is_subquery:
            if _top_level_connectives(node.items) or _has_boolean_group(node.items):
                return True
    return False


def _split_commas(nodes: list[Node]) -> list[list[Node]]:
    parts: list[list[Node]] = [[]]
    for node in nodes:
        if _is(node, ","):
            parts.append([])
        else:
            parts[-1].append(node)
    return [p for p in parts if p]


def _subqueries(nodes: list[Node]) -> list[Group]:
    """Subqueries reachable without passing through another subquery."""
    found = []
    for node in nodes:
        if isinstance(node, Group):
            if node.is_subquery:
                found.append(node)
            else:
                found.extend(_subqueries(node.items))
    return found


def _condition_skill(nodes: list[Node], prefix: str) -> str:
    if _has_boolean_group(nodes):
        return f"{prefix}_nested_conditions"
    if _top_level_connectives(nodes):
        return f"{prefix}_multiple_conditions"
    return f"{prefix}_single_condition"


def _has_arithmetic(nodes: list[Node]) -> bool:
    for i, node in enumerate(nodes):
        if isinstance(node, Tok) and node.text in _ARITH:
            return True
        if isinstance(node, Group) and not (len(node.items) == 1 and _is(node.items[0], "*")):
            if _has_arithmetic(node.items):
                return True
    return False


def _mentions_aggregate(nodes: list[Node]) -> bool:
    for i, node in enumerate(nodes):
        if isinstance(node, Tok) and node.upper in _AGGREGATES and i + 1 < len(nodes) and isinstance(nodes[i + 1], Group):
            return True
        if isinstance(node, Group) and not node.is_subquery and _mentions_aggregate(node.items):
            return True
    return False


def _table_alias(body: list[Node]) -> bool:
    """``t AS a`` or ``t a`` right after FROM/UPDATE/INTO."""
    if len(body) < 2 or not isinstance(body[0], Tok) or body[0].kind not in ("word", "ident"):
        return False
    nxt = body[1]
    if _is(nxt, "AS"):
        return len(body) > 2 and isinstance(body[2], Tok) and body[2].kind in ("word", "ident")
    return isinstance(nxt, Tok) and nxt.kind in ("word", "ident") and nxt.upper not in _KEYWORDS


def detect_db_skills(sql: str) -> set[str]:
    """Return the DB skills exercised by one SQL statement; raises ``ValueError`` when untokenizable."""
    nodes = parse_groups(tokenize(sql))
    if not nodes or not isinstance(nodes[0], Tok):
        return set()
    head = nodes[0].upper
    skills: set[str] = set()
    body = nodes
    if head == "SELECT":
        skills.add("select")
    elif head in ("INSERT", "UPDATE", "DELETE"):
        skills.add(head.lower())
        if head == "UPDATE":
            # Treat the table name after UPDATE as a FROM clause for alias detection.
            body = [Tok("word", "FROM")] + nodes[1:]
    else:
        return set()
    clauses = split_clauses(body)

    from_body = clauses.get("FROM")
    if from_body and _table_alias(from_body):
        skills.add("table_alias")
    select_body = clauses.get("SELECT", [])
    if head == "SELECT" and any(_is(n, "AS") for n in select_body):
        skills.add("column_alias")

    if "WHERE" in clauses and clauses["WHERE"]:
        skills.add(_condition_skill(clauses["WHERE"], "where"))

    group_body = clauses.get("GROUP")
    if group_body:
        skills.add("group_by_multiple_columns" if len(_split_commas(group_body)) > 1 else "group_by_single_column")

    having = clauses.get("HAVING")
    if having:
        many = _top_level_connectives(having) or _has_boolean_group(having)
        skills.add(
            "having_multiple_conditions_with_aggregate" if many else "having_single_condition_with_aggregate"
        )
        if _has_arithmetic(having) and _mentions_aggregate(having):
            skills.add("having_aggregate_calculation")

    order = clauses.get("ORDER")
    if order:
        keys = _split_commas(order)
        if len(keys) == 1:
            skills.add("order_by_single_column")
        else:
            directions = {"DESC" if any(_is(n, "DESC") for n in key) else "ASC" for key in keys}
            skills.add(
                "order_by_multiple_columns_same_direction"
                if len(directions) == 1
                else "order_by_multiple_columns_different_directions"
            )

    limit = clauses.get("LIMIT")
    if limit is not None:
        offset = "OFFSET" in clauses or any(_is(n, ",") for n in limit)
        skills.add("limit_and_offset" if offset else "limit_only")

    subs = _subqueries(nodes)
    if any(_subqueries(s.items) for s in subs):
        skills.add("subquery_nested")
    elif len(subs) > 1:
        skills.add("subquery_multiple")
    elif subs:
        skills.add("subquery_single")
    return skills
