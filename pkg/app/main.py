"""
Command-line entry point.

    penaltynash run <config.json | builtin-name>
    penaltynash check-schedules <config.json | builtin-name>
    penaltynash oracle <config.json | builtin-name>
    penaltynash list-examples
    penaltynash sweep <config>...

JSON documents go to stdout, logs and structured errors to stderr.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.config import get_settings
from app.errors import GameError, InvalidArgumentError
from app.logging_config import setup_logging
from app.schemas import ExperimentConfig
from app.seeders import BUILTIN_EXPERIMENTS, get_builtin, list_examples
from app.services import experiments

logger = logging.getLogger("penaltynash.main")

EXIT_OK = 0
EXIT_MODULE_ERROR = 1
EXIT_INVALID_CONFIG = 2


def _version() -> str:
    path = Path(__file__).resolve().parent.parent / "version.txt"
    try:
        return path.read_text(encoding="utf-8").strip()
    except OSError:
        return "unknown"


def load_config(source: str) -> ExperimentConfig:
    """A config file path or the name of a builtin experiment."""
    path = Path(source)
    if path.is_file():
        logger.debug("Reading config %s", path)
        return ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
    if source in BUILTIN_EXPERIMENTS:
        return get_builtin(source)
    raise InvalidArgumentError(f"'{source}' is neither a config file nor a builtin experiment", source=source)


def _emit(document: Any):
    sys.stdout.write(json.dumps(document, indent=2, default=str) + "\n")
    sys.stdout.flush()


def _emit_error(document: dict[str, Any]):
    sys.stderr.write(json.dumps(document, default=str) + "\n")
    sys.stderr.flush()


def _cmd_run(args, output_dir: Path) -> int:
    cfg = load_config(args.config)
    result = experiments.run_experiment(cfg, output_dir)
    _emit(result.summary)
    return EXIT_OK


def _cmd_check(args, output_dir: Path) -> int:
    cfg = load_config(args.config)
    if args.horizon is not None:
        cfg = cfg.model_copy(update={"check_horizon": args.horizon})
    report = experiments.check_schedules(cfg)
    if report is None:
        _emit({"experiment": cfg.name, "algorithm": cfg.algorithm, "report": None})
        return EXIT_OK
    sys.stderr.write(report.format_table() + "\n")
    _emit({"experiment": cfg.name, "algorithm": cfg.algorithm, "report": report.to_dict()})
    return EXIT_OK


def _cmd_oracle(args, output_dir: Path) -> int:
    cfg = load_config(args.config)
    _emit(experiments.solve_oracle(cfg).to_dict())
    return EXIT_OK


def _cmd_list(args, output_dir: Path) -> int:
    _emit(list_examples())
    return EXIT_OK


def _sweep_worker(document: dict[str, Any], output_dir: str) -> dict[str, Any]:
    cfg = ExperimentConfig.model_validate(document)
    try:
        return experiments.run_experiment(cfg, output_dir).summary
    except GameError as exc:
        return {"experiment": cfg.name, **exc.to_dict()}


def _cmd_sweep(args, output_dir: Path) -> int:
    configs = [load_config(source) for source in args.configs]
    workers = args.workers or get_settings().sweep_workers
    logger.info("Sweeping %d configs on %d workers", len(configs), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_sweep_worker, cfg.model_dump(mode="json"), str(output_dir / f"{k:02d}-{cfg.name}"))
            for k, cfg in enumerate(configs)
        ]
        summaries = [f.result() for f in futures]
    _emit(summaries)
    return EXIT_MODULE_ERROR if any("error" in s for s in summaries) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penaltynash", description="Regularized penalty dynamics for monotone GNEPs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("--output-dir", type=Path, default=None, help="overrides PENALTYNASH_OUTPUT_DIR")
    parser.add_argument("--log-level", default=None, help="overrides PENALTYNASH_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate an experiment and write trajectory and summary")
    run.add_argument("config")
    run.set_defaults(handler=_cmd_run)

    check = sub.add_parser("check-schedules", help="grid check of the convergence conditions")
    check.add_argument("config")
    check.add_argument("--horizon", type=float, default=None)
    check.set_defaults(handler=_cmd_check)

    oracle = sub.add_parser("oracle", help="least-norm variational equilibrium")
    oracle.add_argument("config")
    oracle.set_defaults(handler=_cmd_oracle)

    examples = sub.add_parser("list-examples", help="builtin experiments")
    examples.set_defaults(handler=_cmd_list)

    sweep = sub.add_parser("sweep", help="run several experiments on a process pool")
    sweep.add_argument("configs", nargs="+")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.set_defaults(handler=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(log_level=args.log_level or settings.log_level, log_file=settings.log_file)
    output_dir = args.output_dir or settings.output_dir

    try:
        return args.handler(args, output_dir)
    except ValidationError as exc:
        _emit_error(
            {
                "error": "ValidationError",
                "message": f"invalid config: {exc.error_count()} error(s)",
                "details": {"errors": exc.errors(include_url=False)},
            }
        )
        return EXIT_INVALID_CONFIG
    except GameError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        _emit_error(exc.to_dict())
        return EXIT_MODULE_ERROR
    except OSError as exc:
        _emit_error({"error": type(exc).__name__, "message": str(exc), "details": {}})
        return EXIT_MODULE_ERROR


if __name__ == "__main__":
    sys.exit(main())
