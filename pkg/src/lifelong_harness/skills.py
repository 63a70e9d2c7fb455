"""Atomic skill vocabularies for each environment."""

from __future__ import annotations

DB_SKILLS: tuple[str, ...] = (
    "column_alias",
    "delete",
    "group_by_multiple_columns",
    "group_by_single_column",
    "having_aggregate_calculation",
    "having_multiple_conditions_with_aggregate",
    "having_single_condition_with_aggregate",
    "insert",
    "limit_and_offset",
    "limit_only",
    "order_by_multiple_columns_different_directions",
    "order_by_multiple_columns_same_direction",
    "order_by_single_column",
    "select",
    "subquery_multiple",
    "subquery_nested",
    "subquery_single",
    "table_alias",
    "update",
    "where_multiple_conditions",
    "where_nested_conditions",
    "where_single_condition",
)

OS_SKILLS: tuple[str, ...] = (
    "addgroup",
    "awk",
    "cat",
    "cd",
    "chage",
    "chgrp",
    "chmod",
    "chown",
    "chsh",
    "cp",
    "echo",
    "exit",
    "find",
    "gpasswd",
    "grep",
    "groupadd",
    "ln",
    "ls",
    "mkdir",
    "mv",
    "rm",
    "sed",
    "sleep",
    "tee",
    "touch",
    "useradd",
    "usermod",
    "vi",
    "wc",
)

KG_SKILLS: tuple[str, ...] = (
    "get_relations",
    "get_neighbors",
    "intersection",
    "get_attributes",
    "argmax",
    "argmin",
    "count",
)

assert len(DB_SKILLS) == 22 and len(OS_SKILLS) == 29 and len(KG_SKILLS) == 7
