"""Database environment: SQL execution against a backend, answer matching for
queries, and table-state digests for mutations."""

from __future__ import annotations

import ast
import datetime as _dt
import hashlib
import re
import sqlite3
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Callable, Protocol, Sequence

from ..agent.parsing import ActionKind, ParsedAction
from ..core import ChatHistory, EnvKind, Session, TaskInstance
from ..errors import ContractViolation, EnvironmentFailure
from .base import ChatHistoryFactory, Environment, InteractionResult
from .prompts import db_preamble, db_question

UNIT_SEP = "\x1f"
RECORD_SEP = "\x1e"
NULL_TOKEN = "\\N"


@dataclass(frozen=True)
class SqlResult:
    rows: list[tuple] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class SqlBackend(Protocol):
    dialect: str

    def execute(self, statement: str, params: Sequence[Any] = ()) -> SqlResult: ...

    def quote_ident(self, name: str) -> str: ...

    def close(self) -> None: ...


class SqliteBackend:
    """Embedded engine; one in-memory database per backend instance."""

    dialect = "sqlite"

    def __init__(self, path: str = ":memory:"):
        self._conn = sqlite3.connect(path, check_same_thread=False, isolation_level=None)

    def execute(self, statement: str, params: Sequence[Any] = ()) -> SqlResult:
        try:
            cursor = self._conn.execute(statement, tuple(params))
        except (sqlite3.Error, sqlite3.Warning) as exc:
            return SqlResult(error=str(exc))
        if cursor.description is None:
            return SqlResult(rows=None)
        return SqlResult(rows=[tuple(r) for r in cursor.fetchall()])

    def quote_ident(self, name: str) -> str:
        return '"' + name.replace('"', '""') + '"'

    def close(self) -> None:
        self._conn.close()


class MySQLBackend:
    """MySQL-dialect client over the wire protocol (needs the ``mysql`` extra)."""

    dialect = "mysql"

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 3306,
        user: str = "root",
        password: str = "",
        database: str = "lifelong",
        connect: Callable[..., Any] | None = None,
    ):
        if connect is None:
            try:
                import pymysql
            except ImportError as exc:
                raise EnvironmentFailure("MySQL backend requires the 'pymysql' package") from exc
            connect = pymysql.connect
            self._errors: tuple[type[BaseException], ...] = (pymysql.MySQLError,)
            self._transport_errors: tuple[type[BaseException], ...] = (pymysql.err.OperationalError, pymysql.err.InterfaceError)
        else:
            self._errors = (Exception,)
            self._transport_errors = (ConnectionError,)
        try:
            self._conn = connect(host=host, port=port, user=user, password=password, database=database, autocommit=True)
        except Exception as exc:
            raise EnvironmentFailure(f"cannot reach MySQL at {host}:{port}: {exc}") from exc

    def execute(self, statement: str, params: Sequence[Any] = ()) -> SqlResult:
        try:
            with self._conn.cursor() as cursor:
                cursor.execute(statement, tuple(params) or None)
                if cursor.description is None:
                    return SqlResult(rows=None)
                return SqlResult(rows=[tuple(r) for r in cursor.fetchall()])
        except self._transport_errors as exc:
            code = exc.args[0] if exc.args else None
            # 2003/2006/2013: server gone; anything else is a statement error.
            if code in (2003, 2006, 2013) or isinstance(exc, ConnectionError):
                raise EnvironmentFailure(f"MySQL connection lost: {exc}") from exc
            return SqlResult(error=_mysql_error_text(exc))
        except self._errors as exc:
            return SqlResult(error=_mysql_error_text(exc))

    def quote_ident(self, name: str) -> str:
        return "`" + name.replace("`", "``") + "`"

    def close(self) -> None:
        try:
            self._conn.close()
        except Exception:
            pass


def _mysql_error_text(exc: BaseException) -> str:
    if len(exc.args) == 2:
        return f"{exc.args[0]}: {exc.args[1]}"
    return str(exc)


# -- value rendering -----------------------------------------------------------


def _canonical_number(value: int | float | Decimal) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    normalized = value.normalize()
    return format(normalized, "f")


def canonical_cell(value: Any) -> str:
    """Canonical primitive formatter used by digests and answer comparison."""
    if value is None:
        return NULL_TOKEN
    if isinstance(value, (bool, int, float, Decimal)):
        return _canonical_number(value)
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, (_dt.date, _dt.datetime, _dt.time, _dt.timedelta)):
        return str(value)
    return str(value)


def state_digest(rows: Sequence[Sequence[Any]]) -> str:
    rendered = sorted(UNIT_SEP.join(canonical_cell(c) for c in row) for row in rows)
    return hashlib.md5(RECORD_SEP.join(rendered).encode("utf-8")).hexdigest()


def _render_literal(value: Any) -> str:
    if value is None:
        return "None"
    if isinstance(value, (bool, int, float, Decimal)):
        return _canonical_number(value)
    text = canonical_cell(value)
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_rows(rows: Sequence[Sequence[Any]]) -> str:
    """Tuple-list literal as shown to the agent, e.g. ``[(1, "a"), (2,)]``."""
    parts = []
    for row in rows:
        cells = [_render_literal(c) for c in row]
        parts.append("(" + cells[0] + ",)" if len(cells) == 1 else "(" + ", ".join(cells) + ")")
    return "[" + ", ".join(parts) + "]"


_DECIMAL_CALL = re.compile(r"Decimal\(\s*(['\"])([^'\"]*)\1\s*\)")


def parse_rows(text: str) -> list[tuple]:
    """Tolerant reader for tuple-list literals; raises ``ValueError`` when unparseable.

    Quote style, whitespace and ``Decimal('x')`` wrappers are accepted; values
    themselves are kept exactly as written.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty answer")
    text = _DECIMAL_CALL.sub(lambda m: m.group(2), text)
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError) as exc:
        raise ValueError(f"unparseable answer: {exc}") from exc
    if isinstance(value, (list, tuple)):
        rows = []
        for item in value:
            row = tuple(item) if isinstance(item, (list, tuple)) else (item,)
            for cell in row:
                _check_scalar(cell)
            rows.append(row)
        if isinstance(value, tuple) and value and not any(isinstance(i, (list, tuple)) for i in value):
            # A bare tuple such as (1, "a") is a single row.
            return [tuple(value)]
        return rows
    _check_scalar(value)
    return [(value,)]


def _check_scalar(value: Any) -> None:
    if not (value is None or isinstance(value, (bool, int, float, str, Decimal))):
        raise ValueError(f"unsupported cell {value!r}")


def _cell_key(value: Any) -> tuple[str, Any]:
    if value is None:
        return ("null", None)
    if isinstance(value, (bool, int, float, Decimal)):
        return ("num", Decimal(_canonical_number(value)))
    return ("str", canonical_cell(value))


def rows_equal(left: Sequence[Sequence[Any]], right: Sequence[Sequence[Any]]) -> bool:
    """Exact value comparison with row and column order significant."""
    if len(left) != len(right):
        return False
    for a, b in zip(left, right):
        if len(a) != len(b) or any(_cell_key(x) != _cell_key(y) for x, y in zip(a, b)):
            return False
    return True


# -- environment ---------------------------------------------------------------


def infer_types(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> list[str]:
    types = []
    for i, _ in enumerate(headers):
        column = [r[i] for r in rows if r[i] is not None]
        if column and all(isinstance(v, int) and not isinstance(v, bool) for v in column):
            types.append("INT")
        elif column and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in column):
            types.append("DOUBLE")
        else:
            types.append("TEXT")
    return types


def create_table(backend: SqlBackend, setup: dict[str, Any]) -> None:
    table, headers, rows = setup["table"], list(setup["headers"]), [tuple(r) for r in setup.get("rows", [])]
    types = setup.get("types") or infer_types(headers, rows)
    q = backend.quote_ident
    for stmt in (
        f"DROP TABLE IF EXISTS {q(table)}",
        f"CREATE TABLE {q(table)} (" + ", ".join(f"{q(h)} {t}" for h, t in zip(headers, types)) + ")",
    ):
        result = backend.execute(stmt)
        if not result.ok:
            raise EnvironmentFailure(f"table setup failed: {result.error}")
    placeholder = "?" if backend.dialect == "sqlite" else "%s"
    insert = f"INSERT INTO {q(table)} VALUES (" + ", ".join([placeholder] * len(headers)) + ")"
    for row in rows:
        result = backend.execute(insert, row)
        if not result.ok:
            raise EnvironmentFailure(f"row insert failed: {result.error}")


def table_rows(backend: SqlBackend, table: str) -> list[tuple]:
    result = backend.execute(f"SELECT * FROM {backend.quote_ident(table)}")
    if not result.ok or result.rows is None:
        raise EnvironmentFailure(f"cannot read table {table}: {result.error}")
    return result.rows


def table_digest(backend: SqlBackend, table: str) -> str:
    return state_digest(table_rows(backend, table))


class DBEnvironment(Environment):
    kind = EnvKind.DB

    def __init__(
        self, backend: SqlBackend | None = None, *, round_limit: int = 3, factory: ChatHistoryFactory | None = None
    ):
        super().__init__(factory)
        self.backend = backend or SqliteBackend()
        self.round_limit = round_limit
        self._answer: str | None = None

    def _reset(self, task: TaskInstance) -> ChatHistory:
        self._answer = None
        create_table(self.backend, task.setup)
        question = db_question(task.instruction, task.setup["table"], list(task.setup["headers"]))
        return self.factory.construct(db_preamble(self.round_limit), question)

    def _interact(self, action: ParsedAction) -> InteractionResult:
        if action.kind is ActionKind.DB_OPERATION:
            result = self.backend.execute(str(action.payload))
            if not result.ok:
                return InteractionResult(result.error or "unknown error")
            return InteractionResult(render_rows(result.rows or []))
        if action.kind is ActionKind.DB_ANSWER:
            self._answer = str(action.payload)
            return InteractionResult("", finished=True)
        raise ContractViolation(f"DB environment cannot handle {action.kind.value}")

    def _complete(self, task: TaskInstance, session: Session) -> int:
        gt = task.ground_truth
        table = task.setup["table"]
        if "digest" in gt:
            return int(table_digest(self.backend, table) == gt["digest"])
        if self._answer is None:
            return 0
        try:
            submitted = parse_rows(self._answer)
        except ValueError:
            return 0
        return int(rows_equal(submitted, [tuple(r) for r in gt["rows"]]))

    def _cleanup(self) -> None:
        task = self.active_task
        self._answer = None
        if task is not None:
            self.backend.execute(f"DROP TABLE IF EXISTS {self.backend.quote_ident(task.setup['table'])}")

    def _release(self) -> None:
        self.backend.close()

    def difficulty_bucket(self, session: Session) -> str:
        return str(session.difficulty) if session.difficulty is not None else "unknown"
