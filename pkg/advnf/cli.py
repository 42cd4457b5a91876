"""Command-line surface: gen-data, train, evaluate, sample and reproduce.

Every subcommand prints a JSON summary on success. Exit codes: 0 on success,
1 on validation errors (bad config, violated preconditions, unreadable
checkpoints), 2 on runtime and numeric failures.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from advnf.core.config import settings
from advnf.core.errors import EXIT_OK, EXIT_VALIDATION, AdvNFError, ConfigError
from advnf.models.experiment import ExperimentConfig
from advnf.services.experiment_service import experiment_service
from advnf.services.reproduce_service import STUDIES

logger = logging.getLogger("advnf.cli")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit like every other validation error."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(parser: argparse.ArgumentParser, config_help: str = "Experiment config (TOML)") -> None:
    parser.add_argument("--config", type=Path, default=None, help=config_help)
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=None, help="Worker cap for MCMC generation and evaluation")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="advnf",
        description="Adversarially trained conditional normalizing flows for lattice and synthetic targets.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("gen-data", "Generate train/val/test ensembles"),
        ("train", "Run phase 1 and phase 2 training"),
        ("evaluate", "Evaluate a checkpoint and write the metrics report"),
    ):
        sub = commands.add_parser(name, help=help_text)
        _common(sub)
        sub.add_argument("--preset", default=None, help="Named preset merged under --config")
        if name == "evaluate":
            sub.add_argument("--checkpoint", type=Path, default=None, help="Defaults to <out>/model.ckpt.json")

    sample = commands.add_parser("sample", help="Draw samples from a trained checkpoint")
    sample.add_argument("--checkpoint", type=Path, required=True)
    sample.add_argument("--condition", required=True, help="Temperature (lattice) or component index (synthetic)")
    sample.add_argument("--n", type=int, default=1000, help="Number of samples")
    sample.add_argument("--imh", action="store_true", help="Resample through independent Metropolis-Hastings")
    sample.add_argument("--seed", type=int, default=None)
    sample.add_argument("--out", type=Path, default=None, help="Sample CSV path")

    reproduce = commands.add_parser("reproduce", help="Run a comparison study end to end")
    reproduce.add_argument("study", choices=STUDIES)
    _common(reproduce, config_help="TOML overrides applied to every run of the study")
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None and args.preset is None:
        raise ConfigError("pass --config or --preset")
    return experiment_service.load_config(args.config, args.preset, args.seed, args.out)


def _read_overrides(path: Optional[Path]) -> dict[str, Any]:
    if path is None:
        return {}
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _run(args: argparse.Namespace) -> dict[str, Any]:
    jobs = args.jobs if getattr(args, "jobs", None) else settings.DEFAULT_JOBS

    if args.command == "gen-data":
        cfg = _load_config(args)
        files = experiment_service.cmd_gen_data(cfg, jobs)
        return {
            "command": args.command,
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "data_dir": str(experiment_service.data_dir(cfg)),
            "files_written": len(files),
        }

    if args.command == "train":
        cfg = _load_config(args)
        outcome = experiment_service.cmd_train(cfg, jobs)
        return {
            "command": args.command,
            "variant": cfg.variant_label(),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "phase1_epochs": outcome.phase1.epochs,
            "phase1_best_validation": outcome.phase1.best_validation,
            "phase2_iterations": outcome.phase2.iterations if outcome.phase2 else 0,
            "files": {name: str(path) for name, path in outcome.files.items()},
        }

    if args.command == "evaluate":
        cfg = _load_config(args)
        report = experiment_service.cmd_evaluate(cfg, args.checkpoint, jobs)
        return {
            "command": args.command,
            "variant": report.variant,
            "conditions": len(report.rows),
            "mean": report.mean,
            "std": report.std,
            "report": str(Path(cfg.output_dir) / "report.csv"),
        }

    if args.command == "sample":
        out = args.out if args.out is not None else Path(settings.OUTPUT_DIR) / "samples.csv"
        outcome = experiment_service.cmd_sample(args.checkpoint, args.condition, args.n, args.imh, args.seed, out)
        return {
            "command": args.command,
            "samples": int(len(outcome.samples)),
            "imh": args.imh,
            "acceptance_rate": outcome.acceptance_rate,
            "path": str(outcome.path),
        }

    result = experiment_service.cmd_reproduce(
        args.study, args.seed or 0, args.out, _read_overrides(args.config), jobs
    )
    return {"command": args.command, **result.summary()}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        summary = _run(args)
    except ValidationError as exc:
        logger.error("%s: invalid input: %s", args.command, exc)
        return EXIT_VALIDATION
    except AdvNFError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return exc.exit_code

    print(json.dumps(summary, ensure_ascii=True, indent=2))
    return EXIT_OK
