"""Command-line entry point: ``llh {run,resume,report,datagen,serve}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig, load_config, load_datagen_config
from .controller import fault_hook_from_env
from .errors import ConfigError, DatasetError, HarnessError, SnapshotError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STATE = 3
EXIT_HARNESS = 4
EXIT_INFEASIBLE = 5

log = logging.getLogger("lifelong_harness")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _finish_run(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .experiment import load_dataset, run_experiment
    from .report import render_text, report_from_log, write_report_files

    try:
        tasks, data = load_dataset(config)
    except (ConfigError, DatasetError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        run_experiment(
            config, tasks=tasks, dataset_bytes=data, timestamps=not args.normalize, fault_hook=fault_hook_from_env()
        )
    except SnapshotError as exc:
        return _fail(EXIT_STATE, str(exc))
    except (ConfigError, DatasetError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (HarnessError, OSError) as exc:
        return _fail(EXIT_HARNESS, f"{type(exc).__name__}: {exc}")
    out = config.output_path
    report = report_from_log(out / "sessions.jsonl", label=out.name)
    write_report_files([report], out, figures=not args.no_figures)
    print(render_text([report]), end="")
    return EXIT_OK


def _overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "output", None):
        overrides["output_dir"] = str(Path(args.output).resolve())
    if getattr(args, "controller", None):
        overrides["deployment"] = {"mode": "distributed", "controller": args.controller, "token": args.token}
    return overrides


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    out = config.output_path
    if (out / "snapshot.llh").exists() or (out / "sessions.jsonl").exists():
        return _fail(EXIT_STATE, f"{out} already holds a run; use 'llh resume --output {out}' or a fresh directory")
    return _finish_run(config, args)


def cmd_resume(args: argparse.Namespace) -> int:
    from .experiment import load_config_copy

    out = Path(args.output).resolve()
    if not (out / "snapshot.llh").exists():
        return _fail(EXIT_STATE, f"no snapshot in {out}; nothing to resume")
    try:
        if args.config:
            config = load_config(args.config, {"output_dir": str(out)})
        else:
            config = load_config_copy(out).model_copy(update={"output_dir": str(out)})
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if args.controller:
        config = config.model_copy(update={"deployment": _overrides(args)["deployment"]})
        config = ExperimentConfig.model_validate({**config.model_dump(mode="json"), "base_dir": config.base_dir})
    return _finish_run(config, args)


def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_text, report_from_log, write_report_files

    reports = []
    for path in args.logs:
        try:
            report = report_from_log(path)
        except DatasetError as exc:
            return _fail(EXIT_CONFIG, str(exc))
        except OSError as exc:
            return _fail(EXIT_CONFIG, f"cannot read {path}: {exc}")
        taken = {r.label for r in reports}
        if report.label in taken:
            report.label = f"{report.label}#{len(reports) + 1}"
        reports.append(report)
    if args.output:
        write_report_files(reports, args.output, figures=not args.no_figures)
    print(render_text(reports), end="")
    return EXIT_OK


def cmd_datagen(args: argparse.Namespace) -> int:
    from .agent.models import ChatCompletionsModel
    from .core import EnvKind
    from .datagen import MockDBGenerator, PipelineConfig, run_generation, run_ingestion, write_outputs
    from .environments.kg import TripleStore

    overrides = {"seed": args.seed} if args.seed is not None else {}
    try:
        cfg = load_datagen_config(args.config, overrides)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    pipeline = PipelineConfig(
        env_kind=cfg.env,
        candidates=cfg.candidates,
        target_size=cfg.target_size,
        min_per_skill=cfg.min_per_skill,
        skills_per_task=cfg.skills_per_task,
        rare_skill_ratio=cfg.rare_skill_ratio,
        retries=cfg.retries,
        review_fraction=cfg.review_fraction,
        seed=cfg.seed,
    )
    try:
        if cfg.env is EnvKind.KG:
            assert cfg.source is not None and cfg.fixture is not None
            store = TripleStore.from_tsv(cfg.resolve(cfg.fixture))
            with open(cfg.resolve(cfg.source), encoding="utf-8") as fh:
                records = [json.loads(line) for line in fh if line.strip()]
            result = run_ingestion(records, store, pipeline)
        else:
            gen = cfg.generator
            if gen.kind == "mock":
                if cfg.env is not EnvKind.DB:
                    return _fail(EXIT_CONFIG, "the mock generator only produces DB tasks")
                generator = MockDBGenerator(cfg.seed if gen.seed is None else gen.seed, **gen.options)
            else:
                generator = ChatCompletionsModel(**gen.options)
            result = run_generation(generator, pipeline)
    except (OSError, json.JSONDecodeError, DatasetError, TypeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    paths = write_outputs(result, pipeline, args.output)
    print(json.dumps(result.stats(), indent=2, sort_keys=True))
    if result.infeasible is not None:
        return _fail(EXIT_INFEASIBLE, f"selection infeasible: {result.infeasible}; see {paths['stats']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .rpc.worker import main as worker_main

    if args.token:
        import os

        os.environ["LLH_RPC_TOKEN"] = args.token
    return worker_main(["controller", "--listen", args.listen])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llh", description="Lifelong-learning agent evaluation harness")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--normalize", action="store_true", help="omit timestamps from the session log")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        p.add_argument("--controller", help="address of a server-side controller (switches to distributed mode)")
        p.add_argument("--token", help="shared RPC token for distributed mode")

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int)
    run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue an interrupted run from its snapshot")
    p.add_argument("--output", required=True, help="output directory of the interrupted run")
    p.add_argument("--config", help="config file (defaults to the copy stored with the run)")
    run_flags(p)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("report", help="render metrics from one or more session logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--output", help="directory for report.txt, CSV tables and figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("datagen", help="generate or ingest a skill-balanced dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("serve", help="run the server-side controller for distributed deployments")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--token")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
