"""Skill-balanced task construction and quality control."""

from .generation import (
    GeneratorUnavailable,
    MalformedReply,
    generate_candidate,
    generation_prompt,
    parse_candidate,
    requested_skills,
)
from .mock import MockDBGenerator
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    review_sample,
    run_generation,
    run_ingestion,
    write_outputs,
    write_review_worksheet,
)
from .sampling import SkillStats, relatedness, sample_skill_subset, sample_with_rare_ratio, skill_stats
from .selection import InfeasibleSelection, select_balanced_subset, skill_counts
from .sexpr import UnsupportedExpression, action_skills, convert_record, parse_sexpr, sexpr_to_actions
from .sqlskills import detect_db_skills
from .validation import Candidate, RejectReason, Verdict, detect_os_commands, replay_actions, validate_task

__all__ = [
    "Candidate",
    "GeneratorUnavailable",
    "InfeasibleSelection",
    "MalformedReply",
    "MockDBGenerator",
    "PipelineConfig",
    "PipelineResult",
    "RejectReason",
    "SkillStats",
    "UnsupportedExpression",
    "Verdict",
    "action_skills",
    "convert_record",
    "detect_db_skills",
    "detect_os_commands",
    "generate_candidate",
    "generation_prompt",
    "parse_candidate",
    "parse_sexpr",
    "relatedness",
    "replay_actions",
    "requested_skills",
    "review_sample",
    "run_generation",
    "run_ingestion",
    "sample_skill_subset",
    "sample_with_rare_ratio",
    "select_balanced_subset",
    "sexpr_to_actions",
    "skill_counts",
    "skill_stats",
    "validate_task",
    "write_outputs",
    "write_review_worksheet",
]
