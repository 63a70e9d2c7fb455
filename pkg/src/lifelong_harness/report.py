"""Metric reports rendered from session logs: text tables, CSV files and figures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .core import EnvKind, SampleStatus, Session, compute_metrics, load_sessions

_DIFFICULTY_ORDER = {"easy": 0, "medium": 1, "hard": 2}


def _bucket_key(bucket: str) -> tuple[int, float, str]:
    if bucket in _DIFFICULTY_ORDER:
        return (0, _DIFFICULTY_ORDER[bucket], bucket)
    try:
        return (1, float(bucket), bucket)
    except ValueError:
        return (2, 0.0, bucket)


def _rate(solved: int, count: int) -> float:
    return solved / count if count else 0.0


@dataclass
class LogReport:
    label: str
    sessions: int = 0
    success_rate: float = 0.0
    total_reward: int = 0
    avg_input_tokens: float = 0.0
    max_input_tokens: int = 0
    env_kinds: list[str] = field(default_factory=list)
    status: list[tuple[str, int]] = field(default_factory=list)
    skills: list[tuple[str, int, int]] = field(default_factory=list)
    difficulty: list[tuple[str, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "sessions": self.sessions,
            "success_rate": self.success_rate,
            "total_reward": self.total_reward,
            "avg_input_tokens": self.avg_input_tokens,
            "max_input_tokens": self.max_input_tokens,
            "env_kinds": self.env_kinds,
            "status": [{"status": s, "count": n} for s, n in self.status],
            "skills": [{"skill": k, "solved": a, "count": b, "success_rate": _rate(a, b)} for k, a, b in self.skills],
            "difficulty": [
                {"difficulty": d, "solved": a, "count": b, "success_rate": _rate(a, b)} for d, a, b in self.difficulty
            ],
        }


def build_report(sessions: Sequence[Session], label: str = "log") -> LogReport:
    metrics = compute_metrics(sessions)
    order = list(SampleStatus)
    status = sorted(((s.value, n) for s, n in metrics.status_counts.items()), key=lambda x: order.index(SampleStatus(x[0])))
    by_diff: dict[str, list[int]] = {}
    for s in sessions:
        bucket = by_diff.setdefault("unknown" if s.difficulty is None else str(s.difficulty), [0, 0])
        bucket[0] += s.reward
        bucket[1] += 1
    return LogReport(
        label=label,
        sessions=metrics.session_count,
        success_rate=metrics.success_rate,
        total_reward=metrics.total_reward,
        avg_input_tokens=metrics.avg_input_tokens,
        max_input_tokens=metrics.max_input_tokens,
        env_kinds=sorted({s.env_kind.value for s in sessions}),
        status=status,
        skills=[(k, v[0], v[1]) for k, v in sorted(metrics.per_skill_success.items())],
        difficulty=[(k, v[0], v[1]) for k, v in sorted(by_diff.items(), key=lambda kv: _bucket_key(kv[0]))],
    )


def report_from_log(path: str | Path, label: str | None = None) -> LogReport:
    path = Path(path)
    return build_report(load_sessions(path), label or path.parent.name or path.stem)


def _table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(value: Any) -> str:
    return f"{value:.2f}" if isinstance(value, float) else str(value)


def difficulty_heading(reports: Sequence[LogReport]) -> str:
    kinds = {k for r in reports for k in r.env_kinds}
    return "# ground-truth actions" if kinds == {EnvKind.KG.value} else "difficulty"


def difficulty_rows(reports: Sequence[LogReport]) -> tuple[list[str], list[list[Any]]]:
    """One row per bucket: task count from the first log, then a success-rate column per log."""
    buckets = sorted({d for r in reports for d, _, _ in r.difficulty}, key=_bucket_key)
    first = {d: b for d, _, b in reports[0].difficulty} if reports else {}
    headers = [difficulty_heading(reports), "# tasks", *[r.label for r in reports]]
    rows = []
    for bucket in buckets:
        row: list[Any] = [bucket, first.get(bucket, 0)]
        for r in reports:
            found = {d: (a, b) for d, a, b in r.difficulty}
            row.append(_rate(*found.get(bucket, (0, 0))))
        rows.append(row)
    return headers, rows


def render_text(reports: Sequence[LogReport]) -> str:
    parts = []
    summary = [
        [r.label, r.sessions, r.success_rate, r.total_reward, r.avg_input_tokens, r.max_input_tokens] for r in reports
    ]
    parts.append("Summary\n" + _table(["log", "sessions", "success rate", "solved", "avg input tokens per task", "max prompt tokens"], summary))
    for r in reports:
        prefix = f" [{r.label}]" if len(reports) > 1 else ""
        parts.append(f"Status breakdown{prefix}\n" + _table(["status", "count"], r.status))
        skill_rows = [[k, a, b, _rate(a, b)] for k, a, b in r.skills]
        parts.append(f"Per-skill success{prefix}\n" + _table(["skill", "solved", "count", "success rate"], skill_rows))
    headers, rows = difficulty_rows(reports)
    parts.append("Per-difficulty success\n" + _table(headers, rows))
    return "\n\n".join(parts) + "\n"


def _write_csv(path: Path, headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def write_report_files(reports: Sequence[LogReport], out_dir: str | Path, *, figures: bool = True) -> list[Path]:
    """report.txt, report.json, CSV tables and (optionally) PNG bar charts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.txt", out / "report.json"]
    written[0].write_text(render_text(reports), encoding="utf-8")
    written[1].write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    first = reports[0] if reports else LogReport("log")
    tables = {
        "status.csv": (["status", "count"], list(first.status)),
        "skills.csv": (["skill", "solved", "count", "success_rate"], [[k, a, b, _rate(a, b)] for k, a, b in first.skills]),
        "difficulty.csv": difficulty_rows(reports),
    }
    for name, (headers, rows) in tables.items():
        _write_csv(out / name, headers, rows)
        written.append(out / name)
    if figures:
        written += _figures(reports, out)
    return written


def _figures(reports: Sequence[LogReport], out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    first = reports[0] if reports else LogReport("log")
    paths = []

    def bar(name: str, labels: list[str], values: list[float], ylabel: str, title: str) -> None:
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(labels) + 2), 3.5))
        ax.bar(range(len(labels)), values, color="#4C72B0")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60 if len(labels) > 6 else 0, ha="right" if len(labels) > 6 else "center")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        path = out / name
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)

    bar("status.png", [s for s, _ in first.status], [n for _, n in first.status], "sessions", "Status breakdown")
    headers, rows = difficulty_rows(reports)
    bar("difficulty.png", [str(r[0]) for r in rows], [r[2] if len(r) > 2 else 0.0 for r in rows], "success rate", headers[0])
    bar("skills.png", [k for k, _, _ in first.skills], [_rate(a, b) for _, a, b in first.skills], "success rate", "Per-skill success")
    return paths
