"""Coverage-constrained subset selection."""

from __future__ import annotations

from typing import Iterable, Sequence

from ..core import EnvKind, TaskInstance
from ..errors import HarnessError
from .sampling import SKILL_ORDER
from .sexpr import TAGGED_KG_SKILLS


class InfeasibleSelection(HarnessError):
    """The pool cannot meet the size or per-skill minimum; ``deficient`` maps skill -> achieved count."""

    def __init__(self, message: str, deficient: dict[str, int], target_size: int, min_per_skill: int):
        super().__init__(message)
        self.deficient = deficient
        self.target_size = target_size
        self.min_per_skill = min_per_skill

    def to_dict(self) -> dict:
        return {
            "message": str(self),
            "deficient": self.deficient,
            "target_size": self.target_size,
            "min_per_skill": self.min_per_skill,
        }


def _vocabulary(pool: Sequence[TaskInstance], skills: Iterable[str] | None) -> list[str]:
    if skills is not None:
        return list(skills)
    kinds = {t.env_kind for t in pool}
    if len(kinds) != 1:
        raise ValueError("pool must hold tasks of exactly one environment, or pass skills explicitly")
    kind = kinds.pop()
    return list(TAGGED_KG_SKILLS) if kind is EnvKind.KG else list(SKILL_ORDER[kind])


def select_balanced_subset(
    pool: Sequence[TaskInstance],
    target_size: int,
    min_per_skill: int,
    *,
    skills: Iterable[str] | None = None,
) -> list[TaskInstance]:
    """Pick ``target_size`` tasks so every skill occurs at least ``min_per_skill`` times.

    Greedy: while some skill is short, take the unselected task covering the
    most short skills (earliest in the pool on ties); then fill up in pool
    order. The result keeps pool order. Raises :class:`InfeasibleSelection`
    naming the short skills when the constraint cannot be met.
    """
    if target_size < 0 or min_per_skill < 0:
        raise ValueError("target_size and min_per_skill must be non-negative")
    if target_size > len(pool):
        raise InfeasibleSelection(
            f"pool has {len(pool)} tasks, fewer than the target {target_size}", {}, target_size, min_per_skill
        )
    vocab = _vocabulary(pool, skills) if pool or skills is not None else []
    counts = {s: 0 for s in vocab}
    chosen: set[int] = set()
    task_skills = [set(t.skills) & counts.keys() for t in pool]

    def short() -> set[str]:
        return {s for s, c in counts.items() if c < min_per_skill}

    deficient = short()
    while deficient and len(chosen) < target_size:
        best, best_gain = -1, 0
        for i, sk in enumerate(task_skills):
            if i in chosen:
                continue
            gain = len(sk & deficient)
            if gain > best_gain:
                best, best_gain = i, gain
        if best < 0:
            break
        chosen.add(best)
        for s in task_skills[best]:
            counts[s] += 1
        deficient = short()
    if deficient:
        achieved = {s: counts[s] for s in vocab if s in deficient}
        raise InfeasibleSelection(
            "skills below the minimum: " + ", ".join(f"{s} ({c}/{min_per_skill})" for s, c in achieved.items()),
            achieved,
            target_size,
            min_per_skill,
        )
    for i in range(len(pool)):
        if len(chosen) >= target_size:
            break
        chosen.add(i)
    return [pool[i] for i in sorted(chosen)]


def skill_counts(tasks: Iterable[TaskInstance]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for t in tasks:
        for s in t.skills:
            counts[s] = counts.get(s, 0) + 1
    return counts
