"""Knowledge-graph environment: an in-memory triple store and the seven-action
algebra over named entity-set variables."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from ..agent.parsing import ActionKind, KGCall, ParsedAction
from ..core import ChatHistory, EnvKind, Session, TaskInstance
from ..errors import ContractViolation, DatasetError
from .base import ChatHistoryFactory, Environment, InteractionResult
from .prompts import kg_preamble, kg_question


class KGError(ValueError):
    """An action referenced something undefined or was malformed."""


class TripleStore:
    def __init__(self, triples: Iterable[tuple[str, str, str]] = (), attributes: dict[tuple[str, str], float] | None = None):
        self.triples: set[tuple[str, str, str]] = set()
        self.attributes: dict[tuple[str, str], float] = {}
        self._out: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
        self._attrs: dict[str, dict[str, float]] = defaultdict(dict)
        for s, r, o in triples:
            self.add(s, r, o)
        for (e, a), v in (attributes or {}).items():
            self.set_attribute(e, a, v)

    def add(self, subject: str, relation: str, obj: str) -> None:
        if not (subject and relation and obj):
            raise ValueError("triple components must be non-empty")
        self.triples.add((subject, relation, obj))
        self._out[subject][relation].add(obj)

    def set_attribute(self, entity: str, attribute: str, value: float) -> None:
        if not (entity and attribute):
            raise ValueError("attribute keys must be non-empty")
        self.attributes[(entity, attribute)] = value
        self._attrs[entity][attribute] = value

    def relations_of(self, entity: str) -> set[str]:
        return set(self._out.get(entity, {}))

    def neighbors(self, entity: str, relation: str) -> set[str]:
        return set(self._out.get(entity, {}).get(relation, ()))

    def attributes_of(self, entity: str) -> dict[str, float]:
        return dict(self._attrs.get(entity, {}))

    @classmethod
    def from_tsv(cls, path: str | Path) -> TripleStore:
        """Load ``subject<TAB>relation<TAB>object`` lines; a numeric third field makes an attribute."""
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields")
                s, r, o = parts
                try:
                    value = float(o)
                except ValueError:
                    store.add(s, r, o)
                else:
                    store.set_attribute(s, r, int(value) if value.is_integer() and "." not in o else value)
        return store


@dataclass(frozen=True)
class KGVariable:
    name: str
    entities: frozenset[str]
    provenance: str


Observation = Union[list[str], KGVariable, int]


class VariableTable:
    def __init__(self) -> None:
        self._vars: list[KGVariable] = []

    def __len__(self) -> int:
        return len(self._vars)

    def __iter__(self):
        return iter(self._vars)

    def names(self) -> list[str]:
        return [v.name for v in self._vars]

    def lookup(self, name: str) -> KGVariable:
        if name.startswith("#") and name[1:].isdigit():
            index = int(name[1:])
            if index < len(self._vars):
                return self._vars[index]
        raise KGError(f"variable {name} is not defined")

    def create(self, entities: Iterable[str], provenance: str) -> KGVariable:
        var = KGVariable(f"#{len(self._vars)}", frozenset(entities), provenance)
        self._vars.append(var)
        return var

    def clear(self) -> None:
        self._vars.clear()


def _resolve(arg: str, variables: VariableTable) -> frozenset[str]:
    if arg.startswith("#"):
        return variables.lookup(arg).entities
    return frozenset({arg})


def kg_apply(call: KGCall, store: TripleStore, variables: VariableTable) -> Observation:
    """Apply one action; variable-producing actions append to ``variables``."""
    name, args = call.name, call.args
    if name == "get_relations":
        entities = _resolve(args[0], variables)
        return sorted({r for e in entities for r in store.relations_of(e)})
    if name == "get_neighbors":
        entities = _resolve(args[0], variables)
        found = {o for e in entities for o in store.neighbors(e, args[1])}
        return variables.create(found, call.render())
    if name == "intersection":
        left, right = _resolve(args[0], variables), _resolve(args[1], variables)
        return variables.create(left & right, call.render())
    if name == "get_attributes":
        entities = _resolve(args[0], variables)
        return sorted({a for e in entities for a in store.attributes_of(e)})
    if name in ("argmax", "argmin"):
        entities = _resolve(args[0], variables)
        valued = {e: store.attributes_of(e)[args[1]] for e in entities if args[1] in store.attributes_of(e)}
        if not valued:
            return variables.create((), call.render())
        best = (max if name == "argmax" else min)(valued.values())
        return variables.create((e for e, v in valued.items() if v == best), call.render())
    if name == "count":
        return len(_resolve(args[0], variables))
    raise KGError(f"unknown action {name}")


def render_observation(result: Observation) -> str:
    if isinstance(result, KGVariable):
        return f"Variable {result.name}"
    if isinstance(result, int):
        return str(result)
    return "[" + ", ".join(result) + "]"


def canonical_entities(entities: Iterable[str]) -> str:
    return ",".join(sorted(entities))


class KGEnvironment(Environment):
    kind = EnvKind.KG

    def __init__(self, store: TripleStore, *, round_limit: int = 15, factory: ChatHistoryFactory | None = None):
        super().__init__(factory)
        self.store = store
        self.round_limit = round_limit
        self.variables = VariableTable()
        self._answer: str | None = None

    def _reset(self, task: TaskInstance) -> ChatHistory:
        self.variables.clear()
        self._answer = None
        question = kg_question(task.instruction, dict(task.setup.get("entities", {})))
        return self.factory.construct(kg_preamble(self.round_limit), question)

    def _interact(self, action: ParsedAction) -> InteractionResult:
        if action.kind is ActionKind.KG_ACTION:
            assert isinstance(action.payload, KGCall)
            try:
                return InteractionResult(render_observation(kg_apply(action.payload, self.store, self.variables)))
            except KGError as exc:
                return InteractionResult(f"Error: {exc}")
        if action.kind is ActionKind.KG_ANSWER:
            self._answer = str(action.payload)
            return InteractionResult("", finished=True)
        raise ContractViolation(f"KG environment cannot handle {action.kind.value}")

    def final_answer(self) -> frozenset[str] | int | None:
        """The committed answer resolved to an entity set or an integer (``None`` if unresolvable)."""
        if self._answer is None:
            return None
        token = self._answer.split()[0].rstrip(".") if self._answer.split() else ""
        if token.lstrip("-").isdigit():
            return int(token)
        try:
            return self.variables.lookup(token).entities
        except KGError:
            return None

    def _complete(self, task: TaskInstance, session: Session) -> int:
        answer = self.final_answer()
        gt = task.ground_truth
        if "count" in gt:
            return int(isinstance(answer, int) and answer == int(gt["count"]))
        return int(isinstance(answer, frozenset) and answer == frozenset(gt["answer"]))

    def _cleanup(self) -> None:
        self.variables.clear()
        self._answer = None

    def difficulty_bucket(self, session: Session) -> str:
        return str(session.difficulty) if session.difficulty is not None else "unknown"
