"""Skill statistics, task relatedness and inverse-frequency skill sampling."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..core import EnvKind, TaskInstance
from ..skills import DB_SKILLS, KG_SKILLS, OS_SKILLS

SKILL_ORDER: dict[EnvKind, tuple[str, ...]] = {EnvKind.DB: DB_SKILLS, EnvKind.OS: OS_SKILLS, EnvKind.KG: KG_SKILLS}


def _skills_of(task: TaskInstance | Iterable[str]) -> frozenset[str]:
    return frozenset(task.skills if isinstance(task, TaskInstance) else task)


def relatedness(task_m: TaskInstance | Iterable[str], task_n: TaskInstance | Iterable[str]) -> float:
    """Harmonic mean of the fractions of each task's skills that the other shares.

    Accepts tasks or bare skill collections.
    """
    if isinstance(task_m, TaskInstance) and isinstance(task_n, TaskInstance) and task_m.env_kind != task_n.env_kind:
        raise ValueError("relatedness is only defined between tasks of the same environment")
    skills_m, skills_n = _skills_of(task_m), _skills_of(task_n)
    if not skills_m or not skills_n:
        raise ValueError("relatedness needs non-empty skill sets")
    shared = len(skills_m & skills_n)
    if shared == 0:
        return 0.0
    a_m, a_n = shared / len(skills_m), shared / len(skills_n)
    return 2 * a_m * a_n / (a_m + a_n)


@dataclass
class SkillStats:
    """Occurrence counts for every skill of one environment (zeros included)."""

    env_kind: EnvKind
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.env_kind = EnvKind(self.env_kind)
        order = SKILL_ORDER[self.env_kind]
        unknown = set(self.counts) - set(order)
        if unknown:
            raise ValueError(f"skills {sorted(unknown)} are not {self.env_kind.value} skills")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("skill counts must be non-negative")
        self.counts = {s: int(self.counts.get(s, 0)) for s in order}

    @classmethod
    def from_tasks(cls, env_kind: EnvKind, tasks: Iterable[TaskInstance]) -> SkillStats:
        stats = cls(env_kind)
        for task in tasks:
            stats.add(task.skills)
        return stats

    def add(self, skills: Iterable[str]) -> None:
        for s in skills:
            if s not in self.counts:
                raise ValueError(f"{s} is not a {self.env_kind.value} skill")
            self.counts[s] += 1

    def rare(self, fraction: float = 0.25) -> list[str]:
        """The least frequent ``ceil(fraction * |skills|)`` skills, ties in vocabulary order."""
        size = max(1, math.ceil(fraction * len(self.counts)))
        ranked = sorted(self.counts, key=lambda s: (self.counts[s], SKILL_ORDER[self.env_kind].index(s)))
        return ranked[:size]


def skill_stats(env_kind: EnvKind, tasks: Iterable[TaskInstance]) -> SkillStats:
    return SkillStats.from_tasks(env_kind, tasks)


def skill_weight(count: int) -> float:
    return 1.0 / (count + 1)


def sample_skill_subset(
    stats: SkillStats, k: int, rng: random.Random, *, pool: Sequence[str] | None = None
) -> list[str]:
    """Draw ``k`` distinct skills without replacement, each draw weighted by ``1/(count+1)``.

    ``pool`` restricts the candidates (used to force a rare skill).
    """
    if k <= 0:
        raise ValueError("k must be a positive integer")
    remaining = list(pool if pool is not None else stats.counts)
    if k > len(remaining):
        raise ValueError(f"cannot draw {k} distinct skills from {len(remaining)}")
    chosen: list[str] = []
    for _ in range(k):
        weights = [skill_weight(stats.counts[s]) for s in remaining]
        pick = rng.choices(range(len(remaining)), weights=weights)[0]
        chosen.append(remaining.pop(pick))
    return chosen


def sample_with_rare_ratio(
    stats: SkillStats, k: int, rng: random.Random, rare_ratio: float | None
) -> list[str]:
    """Inverse-frequency draw; with probability ``rare_ratio`` the first skill comes from the rare quartile."""
    if rare_ratio is None or rng.random() >= rare_ratio:
        return sample_skill_subset(stats, k, rng)
    first = sample_skill_subset(stats, 1, rng, pool=stats.rare())
    if k == 1:
        return first
    rest = [s for s in stats.counts if s not in first]
    return first + sample_skill_subset(stats, k - 1, rng, pool=rest)


__all__ = [
    "SKILL_ORDER",
    "SkillStats",
    "relatedness",
    "sample_skill_subset",
    "sample_with_rare_ratio",
    "skill_stats",
    "skill_weight",
]
