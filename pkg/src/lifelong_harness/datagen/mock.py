"""A deterministic stand-in for an LLM task generator (database tasks).

It reads the requested skills from the prompt, composes a statement that
uses as many of them as can coexist, and claims the result it computes on
its own copy of the table. Configurable rates inject malformed replies,
wrong claims and transient endpoint failures so the pipeline's rejection
paths are exercised.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Any, Sequence

from ..core import ChatMessage
from ..environments.db import SqliteBackend, create_table
from ..errors import AgentFailure
from .generation import requested_skills


@dataclass(frozen=True)
class Schema:
    table: str
    key: str
    label: str
    categories: dict[str, tuple[str, ...]]
    numbers: dict[str, tuple[int, int]]

    @property
    def headers(self) -> list[str]:
        return [self.key, self.label, *self.categories, *self.numbers]


SCHEMAS = (
    Schema(
        "employees",
        "emp_id",
        "name",
        {"department": ("Sales", "IT", "HR", "Finance"), "city": ("Austin", "Boston", "Denver")},
        {"salary": (40000, 120000), "age": (21, 64)},
    ),
    Schema(
        "orders",
        "order_id",
        "customer",
        {"status": ("shipped", "pending", "cancelled"), "region": ("north", "south", "east", "west")},
        {"quantity": (1, 40), "price": (5, 500)},
    ),
    Schema(
        "patients",
        "patient_id",
        "patient_name",
        {"ward": ("A", "B", "C"), "doctor": ("Kim", "Lopez", "Shah", "Ito")},
        {"stay_days": (1, 30), "age": (1, 95)},
    ),
    Schema(
        "listings",
        "listing_id",
        "title",
        {"kind": ("house", "flat", "studio"), "agent": ("Ada", "Ben", "Cal")},
        {"price": (900, 9000), "square_feet": (300, 4000)},
    ),
)

_NAMES = ("Avery", "Blake", "Casey", "Drew", "Emery", "Finley", "Gray", "Harper", "Indy", "Jules", "Kai", "Lane")


class _Builder:
    def __init__(self, rng: random.Random, schema: Schema, rows: list[list[Any]], skills: set[str]):
        self.rng, self.s, self.rows, self.skills = rng, schema, rows, skills
        self.nums = list(schema.numbers)
        self.cats = list(schema.categories)

    def _num_value(self, col: str) -> int:
        idx = self.s.headers.index(col)
        values = sorted(r[idx] for r in self.rows)
        return values[len(values) // 2]

    def _cat_value(self, col: str) -> str:
        idx = self.s.headers.index(col)
        return self.rng.choice(sorted({r[idx] for r in self.rows}))

    def _atom(self) -> str:
        if self.rng.random() < 0.5:
            col = self.rng.choice(self.nums)
            return f"{col} {self.rng.choice(('>', '<', '>=', '<='))} {self._num_value(col)}"
        col = self.rng.choice(self.cats)
        return f'{col} = "{self._cat_value(col)}"'

    def _subquery_atom(self, nested: bool) -> str:
        col = self.rng.choice(self.nums)
        agg = self.rng.choice(("AVG", "MAX", "MIN"))
        op = {"AVG": ">", "MAX": "<", "MIN": ">"}[agg]
        if not nested:
            return f"{col} {op} (SELECT {agg}({col}) FROM {self.s.table})"
        cat, other = self.rng.choice(self.cats), self.rng.choice(self.nums)
        inner = f"SELECT {cat} FROM {self.s.table} WHERE {other} > {self._num_value(other)}"
        return f"{col} {op} (SELECT {agg}({col}) FROM {self.s.table} WHERE {cat} IN ({inner}))"

    def where(self) -> str:
        k = self.skills
        atoms = []
        if "subquery_nested" in k:
            atoms.append(self._subquery_atom(True))
        elif "subquery_multiple" in k:
            atoms += [self._subquery_atom(False), self._subquery_atom(False)]
        elif "subquery_single" in k:
            atoms.append(self._subquery_atom(False))
        if "where_nested_conditions" in k:
            while len(atoms) < 3:
                atoms.append(self._atom())
            return f" WHERE ({atoms[0]} OR {atoms[1]}) AND " + " AND ".join(atoms[2:])
        if "where_multiple_conditions" in k:
            while len(atoms) < 2:
                atoms.append(self._atom())
        elif "where_single_condition" in k and not atoms:
            atoms.append(self._atom())
        if not atoms:
            return ""
        joiner = " OR " if self.rng.random() < 0.3 else " AND "
        return " WHERE " + joiner.join(atoms)

    def from_clause(self) -> str:
        alias = f" AS {self.s.table[0]}" if "table_alias" in self.skills else ""
        return f"{self.s.table}{alias}"

    def having(self) -> tuple[str, bool]:
        k = self.skills
        if not any(s.startswith("having") for s in k):
            return "", False
        col = self.rng.choice(self.nums)
        parts = []
        if "having_aggregate_calculation" in k:
            parts.append(f"MAX({col}) - MIN({col}) >= 0")
        else:
            parts.append("COUNT(*) >= 1")
        if "having_multiple_conditions_with_aggregate" in k:
            parts.append(f"AVG({col}) > {self._num_value(col) // 4}")
        return " HAVING " + " AND ".join(parts), True

    def order_limit(self, keys: Sequence[str]) -> str:
        k, out = self.skills, ""
        keys = list(keys)
        if "order_by_single_column" in k:
            out = f" ORDER BY {keys[0]} {self.rng.choice(('ASC', 'DESC'))}"
        elif "order_by_multiple_columns_same_direction" in k and len(keys) > 1:
            d = self.rng.choice(("ASC", "DESC"))
            out = f" ORDER BY {keys[0]} {d}, {keys[1]} {d}"
        elif "order_by_multiple_columns_different_directions" in k and len(keys) > 1:
            out = f" ORDER BY {keys[0]} DESC, {keys[1]} ASC"
        if "limit_and_offset" in k:
            out += f" LIMIT {self.rng.randint(2, 5)} OFFSET {self.rng.randint(1, 3)}"
        elif "limit_only" in k:
            out += f" LIMIT {self.rng.randint(2, 6)}"
        return out

    def select(self) -> str:
        k, s = self.skills, self.s
        alias = "column_alias" in k
        grouped = "group_by_multiple_columns" in k or "group_by_single_column" in k or any(
            x.startswith("having") for x in k
        )
        if grouped:
            group_cols = self.cats[:2] if "group_by_multiple_columns" in k else [self.rng.choice(self.cats)]
            num = self.rng.choice(self.nums)
            agg_expr = f"SUM({num})"
            agg = f"{agg_expr} AS total_{num}" if alias else agg_expr
            agg_key = f"total_{num}" if alias else agg_expr
            having, _ = self.having()
            sql = (
                f"SELECT {', '.join(group_cols)}, {agg} FROM {self.from_clause()}{self.where()}"
                f" GROUP BY {', '.join(group_cols)}{having}"
            )
            return sql + self.order_limit([agg_key, group_cols[0]])
        cols = [s.label, self.rng.choice(self.nums), self.rng.choice(self.cats)]
        rendered = [f"{cols[0]} AS {cols[0]}_label" if alias else cols[0], *cols[1:]]
        keys = [cols[1], s.key]
        return f"SELECT {', '.join(rendered)} FROM {self.from_clause()}{self.where()}" + self.order_limit(keys)

    def insert(self) -> str:
        s = self.s
        if any(x.startswith(("where", "subquery", "order", "limit", "group", "having")) for x in self.skills):
            num = self.rng.choice(self.nums)
            cols = [s.key, s.label, num]
            if "group_by_single_column" in self.skills or "group_by_multiple_columns" in self.skills:
                cat = self.cats[0]
                return (
                    f"INSERT INTO {s.table} ({s.key}, {cat}, {num}) SELECT MAX({s.key}) + 1000, {cat}, SUM({num})"
                    f" FROM {s.table}{self.where()} GROUP BY {cat}{self.having()[0]}"
                )
            return (
                f"INSERT INTO {s.table} ({', '.join(cols)}) SELECT {s.key} + 1000, {s.label}, {num} FROM {s.table}"
                f"{self.where()}" + self.order_limit([num, s.key])
            )
        new_id = max(r[0] for r in self.rows) + 1
        values = [str(new_id), f'"{self.rng.choice(_NAMES)}"']
        values += [f'"{self.rng.choice(s.categories[c])}"' for c in self.cats]
        values += [str(self.rng.randint(*s.numbers[n])) for n in self.nums]
        return f"INSERT INTO {s.table} ({', '.join(s.headers)}) VALUES ({', '.join(values)})"

    def update(self) -> str:
        num = self.rng.choice(self.nums)
        return f"UPDATE {self.from_clause()} SET {num} = {num} + {self.rng.randint(1, 9)}{self.where()}"

    def delete(self) -> str:
        return f"DELETE FROM {self.from_clause()}{self.where()}"

    def statement(self) -> str:
        for kind in ("insert", "update", "delete"):
            if kind in self.skills:
                return getattr(self, kind)()
        return self.select()


def _difficulty(skills: Sequence[str]) -> str:
    return "easy" if len(skills) <= 2 else "medium" if len(skills) <= 4 else "hard"


class MockDBGenerator:
    """Chat-model compatible generator; output depends only on (seed, task_id, round_index)."""

    def __init__(
        self,
        seed: int = 0,
        *,
        malformed_rate: float = 0.03,
        wrong_claim_rate: float = 0.05,
        failure_rate: float = 0.02,
    ):
        self.seed = seed
        self.malformed_rate = malformed_rate
        self.wrong_claim_rate = wrong_claim_rate
        self.failure_rate = failure_rate
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage], *, task_id: str | None = None, round_index: int = 0) -> str:
        self.calls += 1
        rng = random.Random(f"{self.seed}:{task_id}:{round_index}")
        if rng.random() < self.failure_rate:
            raise AgentFailure("mock generator: transient endpoint failure")
        if rng.random() < self.malformed_rate:
            return "I could not produce a task this time."
        skills = set(requested_skills(messages[-1].content))
        schema = rng.choice(SCHEMAS)
        rows = self._rows(rng, schema)
        sql = _Builder(rng, schema, rows, skills).statement()
        setup = {"table": schema.table, "headers": schema.headers, "rows": rows}
        expected = self._claim(setup, sql)
        if "rows" in expected and rng.random() < self.wrong_claim_rate:
            expected["rows"] = expected["rows"][:-1] if expected["rows"] else [[0]]
        reply = {
            "instruction": f"On table {schema.table}, carry out the request that needs: {', '.join(sorted(skills))}.",
            "setup": setup,
            "solution": sql + ";",
            "expected": expected,
            "difficulty": _difficulty(sorted(skills)),
        }
        return "```json\n" + json.dumps(reply, sort_keys=True) + "\n```"

    @staticmethod
    def _rows(rng: random.Random, schema: Schema) -> list[list[Any]]:
        rows = []
        for i in range(rng.randint(8, 14)):
            row: list[Any] = [i + 1, f"{rng.choice(_NAMES)} {chr(65 + i)}"]
            row += [rng.choice(schema.categories[c]) for c in schema.categories]
            row += [rng.randint(*schema.numbers[n]) for n in schema.numbers]
            rows.append(row)
        return rows

    @staticmethod
    def _claim(setup: dict[str, Any], sql: str) -> dict[str, Any]:
        backend = SqliteBackend()
        try:
            create_table(backend, setup)
            result = backend.execute(sql)
        finally:
            backend.close()
        if result.ok and result.rows is not None:
            return {"rows": [list(r) for r in result.rows]}
        return {}
