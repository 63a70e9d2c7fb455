"""End-to-end dataset construction: sample skills, generate, verify, select."""

from __future__ import annotations

import csv
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from ..agent.models import ChatModel
from ..core import EnvKind, TaskInstance, dump_tasks
from ..environments.base import Environment
from ..environments.kg import TripleStore
from .generation import GeneratorUnavailable, MalformedReply, generate_candidate
from .sampling import SkillStats, sample_with_rare_ratio
from .selection import InfeasibleSelection, select_balanced_subset
from .sexpr import UnsupportedExpression, convert_record
from .validation import Candidate, Verdict, validate_task

MALFORMED_REPLY = "malformed_reply"
GENERATOR_UNAVAILABLE = "generator_unavailable"
UNSUPPORTED_EXPRESSION = "unsupported_expression"


@dataclass(frozen=True)
class PipelineConfig:
    env_kind: EnvKind = EnvKind.DB
    candidates: int = 1306
    target_size: int = 500
    min_per_skill: int = 20
    skills_per_task: tuple[int, int] = (2, 3)
    rare_skill_ratio: float | None = None
    retries: int = 2
    review_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "env_kind", EnvKind(self.env_kind))
        lo, hi = self.skills_per_task
        if not 1 <= lo <= hi:
            raise ValueError("skills_per_task must satisfy 1 <= low <= high")
        if self.rare_skill_ratio is not None and not 0 <= self.rare_skill_ratio <= 1:
            raise ValueError("rare_skill_ratio must lie in [0, 1]")


@dataclass
class PipelineResult:
    pool: list[TaskInstance]
    selected: list[TaskInstance]
    generated: int
    rejected_by_reason: Counter = field(default_factory=Counter)
    infeasible: InfeasibleSelection | None = None

    def stats(self) -> dict[str, Any]:
        out = {
            "generated": self.generated,
            "validated": len(self.pool),
            "rejected_by_reason": dict(sorted(self.rejected_by_reason.items())),
            "selected": len(self.selected),
            "discarded": self.generated - len(self.pool),
            "unselected": len(self.pool) - len(self.selected),
            "discarded_or_unselected": self.generated - len(self.selected),
        }
        if self.infeasible is not None:
            out["infeasible"] = self.infeasible.to_dict()
        return out


def _select(pool: list[TaskInstance], config: PipelineConfig, skills: Sequence[str] | None = None):
    try:
        return select_balanced_subset(pool, config.target_size, config.min_per_skill, skills=skills), None
    except InfeasibleSelection as exc:
        return [], exc


def run_generation(
    generator: ChatModel,
    config: PipelineConfig,
    *,
    environment: Environment | None = None,
) -> PipelineResult:
    """Generate ``config.candidates`` proposals and keep the verified ones.

    Skill sampling is driven by the counts of already accepted tasks, so
    skills that keep failing verification keep getting priority.
    """
    if config.env_kind is EnvKind.KG:
        raise ValueError("knowledge-graph tasks are ingested with run_ingestion")
    rng = random.Random(config.seed)
    stats = SkillStats(config.env_kind)
    pool: list[TaskInstance] = []
    rejected: Counter = Counter()
    prefix = config.env_kind.value.lower()
    for index in range(config.candidates):
        k = rng.randint(*config.skills_per_task)
        skills = sample_with_rare_ratio(stats, k, rng, config.rare_skill_ratio)
        task_id = f"{prefix}-{index:04d}"
        try:
            candidate = generate_candidate(generator, skills, config.env_kind, task_id=task_id, retries=config.retries)
        except MalformedReply:
            rejected[MALFORMED_REPLY] += 1
            continue
        except GeneratorUnavailable:
            rejected[GENERATOR_UNAVAILABLE] += 1
            continue
        verdict = validate_task(candidate, environment)
        if verdict.accepted:
            assert verdict.task is not None
            pool.append(verdict.task)
            stats.add(verdict.task.skills)
        else:
            rejected[verdict.reason.value] += 1  # type: ignore[union-attr]
    selected, infeasible = _select(pool, config)
    return PipelineResult(pool, selected, config.candidates, rejected, infeasible)


def run_ingestion(
    records: Iterable[dict[str, Any]],
    store: TripleStore,
    config: PipelineConfig,
) -> PipelineResult:
    """Convert S-expression query records to KG tasks and verify them on ``store``."""
    pool: list[TaskInstance] = []
    rejected: Counter = Counter()
    generated = 0
    for record in records:
        generated += 1
        try:
            fields = convert_record(record)
        except (UnsupportedExpression, KeyError):
            rejected[UNSUPPORTED_EXPRESSION] += 1
            continue
        expected = {k: record[k] for k in ("answer", "count") if k in record}
        candidate = Candidate(
            fields["task_id"],
            EnvKind.KG,
            fields["instruction"],
            fields["setup"],
            fields["actions"],
            expected,
            fields["skills"],
            fields["difficulty"],
        )
        verdict: Verdict = validate_task(candidate, store=store)
        if verdict.accepted:
            assert verdict.task is not None
            pool.append(verdict.task)
        else:
            rejected[verdict.reason.value] += 1  # type: ignore[union-attr]
    selected, infeasible = _select(pool, config)
    return PipelineResult(pool, selected, generated, rejected, infeasible)


REVIEW_COLUMNS = ("task_id", "skills", "instruction", "ground_truth", "syntax_ok", "logic_ok", "notes")


def review_sample(tasks: Sequence[TaskInstance], fraction: float, seed: int) -> list[TaskInstance]:
    """A seeded ``ceil(fraction * n)`` sample, returned in dataset order."""
    if not tasks or fraction <= 0:
        return []
    size = min(len(tasks), max(1, math.ceil(len(tasks) * fraction - 1e-9)))
    picked = sorted(random.Random(seed).sample(range(len(tasks)), size))
    return [tasks[i] for i in picked]


def write_review_worksheet(tasks: Sequence[TaskInstance], path: Path | str) -> None:
    """CSV worksheet with empty verdict columns for human reviewers."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REVIEW_COLUMNS)
        for t in tasks:
            writer.writerow(
                [t.task_id, ";".join(t.skills), t.instruction, json.dumps(t.ground_truth, sort_keys=True), "", "", ""]
            )


def write_outputs(result: PipelineResult, config: PipelineConfig, out_dir: Path | str) -> dict[str, Path]:
    """Write dataset, pool, stats and review worksheet; the dataset is omitted when selection failed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"pool": out / "pool.jsonl", "stats": out / "stats.json"}
    dump_tasks(result.pool, paths["pool"])
    if result.infeasible is None:
        paths["dataset"] = out / "dataset.jsonl"
        dump_tasks(result.selected, paths["dataset"])
        paths["review"] = out / "review.csv"
        write_review_worksheet(review_sample(result.selected, config.review_fraction, config.seed), paths["review"])
    paths["stats"].write_text(json.dumps(result.stats(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
